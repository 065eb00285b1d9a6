//! Seeded random instances.

use alloc::format;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Exp1};

use crate::error::{Error, Result};
use crate::instance::{Instance, Job, Mode};
use crate::math::pow;
use crate::power::PowerFunction;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum RateModel {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Each rate is zero with its machine's probability, else uniform in `[lo, hi]`.
    /// A single probability applies to every machine.
    ZeroInflated {
        prob_zero: Vec<f64>,
        lo: f64,
        hi: f64,
    },
    /// `ℓ_ij = speed_i / demand_j` with demands uniform in `[demand_lo, demand_hi]`.
    Related {
        speeds: Vec<f64>,
        demand_lo: f64,
        demand_hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum WeightModel {
    UniformInt {
        lo: u64,
        hi: u64,
    },
    /// `P(w) ∝ w^-exponent` on `1..=cap`.
    PowerLaw {
        exponent: f64,
        cap: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum SizeModel {
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum ArrivalModel {
    /// Exponential inter-arrival times with the given rate, starting at 0.
    Poisson {
        rate: f64,
    },
    BatchAtZero,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeneratorConfig {
    pub machine_count: usize,
    pub job_count: usize,
    pub seed: u64,
    pub rate_model: RateModel,
    pub weight_model: WeightModel,
    pub size_model: SizeModel,
    pub arrival_model: ArrivalModel,
    /// Energy mode when present; machine `i` gets `palette[i % len]`.
    pub power_palette: Option<Vec<PowerFunction>>,
}

impl GeneratorConfig {
    /// Uniform rates in `[0.5, 2]`, weights `1..=4`, sizes in `[0.5, 2]`,
    /// Poisson arrivals at rate 1, flow mode.
    pub fn flow(machine_count: usize, job_count: usize, seed: u64) -> Self {
        GeneratorConfig {
            machine_count,
            job_count,
            seed,
            rate_model: RateModel::Uniform { lo: 0.5, hi: 2.0 },
            weight_model: WeightModel::UniformInt { lo: 1, hi: 4 },
            size_model: SizeModel::Uniform { lo: 0.5, hi: 2.0 },
            arrival_model: ArrivalModel::Poisson { rate: 1.0 },
            power_palette: None,
        }
    }

    pub fn mode(&self) -> Mode {
        if self.power_palette.is_some() {
            Mode::Energy
        } else {
            Mode::Flow
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.machine_count == 0 {
            return bad("machine_count must be positive".into());
        }
        match &self.rate_model {
            RateModel::Uniform { lo, hi } => positive_range("rate", *lo, *hi)?,
            RateModel::ZeroInflated { prob_zero, lo, hi } => {
                positive_range("rate", *lo, *hi)?;
                if prob_zero.len() != 1 && prob_zero.len() != self.machine_count {
                    return bad(format!(
                        "prob_zero needs 1 or {} entries, found {}",
                        self.machine_count,
                        prob_zero.len()
                    ));
                }
                if let Some(p) = prob_zero.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
                    return bad(format!("prob_zero {p} outside [0, 1]"));
                }
            }
            RateModel::Related { speeds, demand_lo, demand_hi } => {
                positive_range("demand", *demand_lo, *demand_hi)?;
                if speeds.len() != self.machine_count {
                    return bad(format!("related model needs {} speeds, found {}", self.machine_count, speeds.len()));
                }
                if let Some(s) = speeds.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
                    return bad(format!("machine speed {s} must be positive"));
                }
            }
        }
        match self.weight_model {
            WeightModel::UniformInt { lo, hi } => {
                if lo < 1 || lo > hi {
                    return bad(format!("weight range [{lo}, {hi}] must satisfy 1 <= lo <= hi"));
                }
            }
            WeightModel::PowerLaw { exponent, cap } => {
                if cap < 1 || !exponent.is_finite() {
                    return bad(format!("power-law weights need cap >= 1 and finite exponent, got {cap}, {exponent}"));
                }
            }
        }
        match self.size_model {
            SizeModel::Uniform { lo, hi } => positive_range("size", lo, hi)?,
            SizeModel::Exponential { mean } => {
                if !(mean > 0.0 && mean.is_finite()) {
                    return bad(format!("size mean {mean} must be positive"));
                }
            }
        }
        if let ArrivalModel::Poisson { rate } = self.arrival_model {
            if !(rate > 0.0 && rate.is_finite()) {
                return bad(format!("arrival rate {rate} must be positive"));
            }
        }
        if let Some(p) = &self.power_palette {
            if p.is_empty() {
                return bad("power palette must not be empty".into());
            }
        }
        Ok(())
    }
}

fn positive_range(what: &str, lo: f64, hi: f64) -> Result<()> {
    if lo > 0.0 && lo <= hi && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} range [{lo}, {hi}] must satisfy 0 < lo <= hi")))
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        Uniform::new_inclusive(lo, hi).expect("checked range").sample(rng)
    }
}

/// Draws an instance; the same config always yields the same instance.
pub fn generate(config: &GeneratorConfig) -> Result<Instance> {
    config.check()?;
    let m = config.machine_count;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let weights = match config.weight_model {
        WeightModel::PowerLaw { exponent, cap } => {
            let table: Vec<f64> = (1..=cap).map(|w| pow(w as f64, -exponent)).collect();
            Some(WeightedIndex::new(&table).map_err(|e| Error::Config(format!("power-law weights: {e}")))?)
        }
        WeightModel::UniformInt { .. } => None,
    };

    let mut clock = 0.0f64;
    let mut jobs = Vec::with_capacity(config.job_count);
    for j in 0..config.job_count {
        let release = match config.arrival_model {
            ArrivalModel::BatchAtZero => 0.0,
            ArrivalModel::Poisson { rate } => {
                let gap: f64 = Exp::new(rate).map_err(|e| Error::Config(format!("{e}")))?.sample(&mut rng);
                let t = clock;
                clock += gap;
                t
            }
        };
        let size = match config.size_model {
            SizeModel::Uniform { lo, hi } => uniform(&mut rng, lo, hi),
            SizeModel::Exponential { mean } => loop {
                let s: f64 = Exp1.sample(&mut rng);
                if s > 0.0 {
                    break s * mean;
                }
            },
        };
        let weight = match (&config.weight_model, &weights) {
            (WeightModel::UniformInt { lo, hi }, _) => rng.random_range(*lo..=*hi),
            (WeightModel::PowerLaw { .. }, Some(dist)) => dist.sample(&mut rng) as u64 + 1,
            (WeightModel::PowerLaw { .. }, None) => unreachable!(),
        };
        let rates = draw_rates(&mut rng, &config.rate_model, m);
        jobs.push(Job { id: format!("j{j:04}"), release, size, weight, rates });
    }

    let instance = match &config.power_palette {
        None => Instance::flow(m, jobs),
        Some(palette) => {
            let pfs = (0..m).map(|i| palette[i % palette.len()].clone()).collect();
            Instance::energy(jobs, pfs)
        }
    };
    debug_assert!(instance.validate().is_empty());
    Ok(instance)
}

fn draw_rates<R: Rng>(rng: &mut R, model: &RateModel, m: usize) -> Vec<f64> {
    match model {
        RateModel::Uniform { lo, hi } => (0..m).map(|_| uniform(rng, *lo, *hi)).collect(),
        RateModel::Related { speeds, demand_lo, demand_hi } => {
            let demand = uniform(rng, *demand_lo, *demand_hi);
            speeds.iter().map(|s| s / demand).collect()
        }
        RateModel::ZeroInflated { prob_zero, lo, hi } => {
            let p = |i: usize| if prob_zero.len() == 1 { prob_zero[0] } else { prob_zero[i] };
            let mut rates: Vec<f64> = (0..m)
                .map(|i| {
                    let zero = rng.random::<f64>() < p(i);
                    let value = uniform(rng, *lo, *hi);
                    if zero {
                        0.0
                    } else {
                        value
                    }
                })
                .collect();
            if rates.iter().all(|&r| r == 0.0) {
                // Keep the job schedulable: revive the machine least likely to be zero.
                let revive = (0..m).min_by(|&a, &b| p(a).total_cmp(&p(b)).then(a.cmp(&b))).unwrap_or(0);
                rates[revive] = uniform(rng, *lo, *hi);
            }
            rates
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn deterministic_per_seed() {
        let cfg = GeneratorConfig::flow(3, 20, 42);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = GeneratorConfig { seed: 43, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn small_instance_is_valid() {
        let inst = generate(&GeneratorConfig::flow(2, 3, 7)).unwrap();
        assert_eq!(inst.job_count(), 3);
        assert!(inst.validate().is_empty());
        assert_eq!(inst.jobs[0].release, 0.0);
        assert_eq!(inst.jobs[2].id, "j0002");
    }

    #[test]
    fn empty_instance() {
        let inst = generate(&GeneratorConfig::flow(2, 0, 1)).unwrap();
        assert!(inst.jobs.is_empty());
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn zero_inflated_column() {
        let cfg = GeneratorConfig {
            rate_model: RateModel::ZeroInflated { prob_zero: vec![1.0, 0.3], lo: 1.0, hi: 2.0 },
            ..GeneratorConfig::flow(2, 50, 3)
        };
        let inst = generate(&cfg).unwrap();
        assert!(inst.jobs.iter().all(|j| j.rates[0] == 0.0 && j.rates[1] > 0.0));
        assert!(inst.validate().is_empty());

        // Direct construction: only all-zero rows are flagged.
        let flagged = Instance::flow(
            2,
            vec![
                Job { id: "a".into(), release: 0.0, size: 1.0, weight: 1, rates: vec![0.0, 1.0] },
                Job { id: "b".into(), release: 0.0, size: 1.0, weight: 1, rates: vec![0.0, 0.0] },
            ],
        );
        let v = flagged.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(&v[0].subject, crate::instance::Subject::Job { index: 1, .. }));
    }

    #[test]
    fn power_law_weights_and_energy_palette() {
        let cfg = GeneratorConfig {
            weight_model: WeightModel::PowerLaw { exponent: 1.0, cap: 1024 },
            size_model: SizeModel::Exponential { mean: 1.0 },
            arrival_model: ArrivalModel::BatchAtZero,
            power_palette: Some(vec![PowerFunction::polynomial(2.0).unwrap()]),
            ..GeneratorConfig::flow(3, 100, 9)
        };
        let inst = generate(&cfg).unwrap();
        assert_eq!(inst.mode, Mode::Energy);
        assert_eq!(inst.power_functions.as_ref().unwrap().len(), 3);
        assert!(inst.jobs.iter().all(|j| (1..=1024).contains(&j.weight) && j.release == 0.0));
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn malformed_configs() {
        let base = GeneratorConfig::flow(2, 5, 0);
        let cases = [
            GeneratorConfig { rate_model: RateModel::Uniform { lo: 2.0, hi: 1.0 }, ..base.clone() },
            GeneratorConfig { weight_model: WeightModel::UniformInt { lo: 0, hi: 3 }, ..base.clone() },
            GeneratorConfig { size_model: SizeModel::Exponential { mean: 0.0 }, ..base.clone() },
            GeneratorConfig { arrival_model: ArrivalModel::Poisson { rate: -1.0 }, ..base.clone() },
            GeneratorConfig { machine_count: 0, ..base.clone() },
            GeneratorConfig {
                rate_model: RateModel::Related { speeds: vec![1.0], demand_lo: 1.0, demand_hi: 2.0 },
                ..base.clone()
            },
        ];
        for cfg in cases {
            assert!(matches!(generate(&cfg), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
