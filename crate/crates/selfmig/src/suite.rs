//! The randomized acceptance sweep.
//!
//! Each criterion aggregates normalized slacks `(lhs - rhs) / scale` over
//! every inequality it covers. A criterion passes only if no single check
//! exceeds its tolerance and no run failed.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use selfmig_core::certify::{certify, CertificateReport, CheckSummary, Tolerances};
use selfmig_core::game::MigrationPolicy;
use selfmig_core::generate::{generate, ArrivalModel, GeneratorConfig, RateModel, SizeModel, WeightModel};
use selfmig_core::oracle::{brute_force_opt, OracleOptions};
use selfmig_core::queue::{rate_assignment, PolicyConfig, QueueState};
use selfmig_core::sim::{run, RunSettings};
use selfmig_core::{Instance, Job, JobId, Mode, PowerFunction};

use crate::artifacts::{certificate_to_string, result_to_string, timeseries_csv};
use crate::{instance_from_str, instance_to_string, log_from_str, log_to_string};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    /// Seeded instances per mode.
    pub instances: usize,
    pub migration_instances: usize,
    pub tiny_fixtures: usize,
    /// `(power function, w)` samples for the conjugate sweep.
    pub samples: usize,
    /// Random queues for the round-robin reduction.
    pub queues: usize,
    pub determinism_seeds: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            instances: 100,
            migration_instances: 24,
            tiny_fixtures: 24,
            samples: 1000,
            queues: 1000,
            determinism_seeds: 4,
            seed: 0,
            tolerances: Tolerances::default(),
        }
    }
}

/// `k` values swept on the flow suite (`ε = 1, 1/2, 1/4`).
pub const FLOW_KS: [u32; 3] = [1, 2, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub checked: u64,
    pub violations: u64,
    pub worst_slack: Option<f64>,
    pub detail: String,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<34} checked {:>9}  violations {:>4}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.checked,
            self.violations
        )?;
        if let Some(w) = self.worst_slack {
            write!(f, "  worst slack {w:.3e}")?;
        }
        if !self.detail.is_empty() {
            write!(f, "  {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Agg {
    checked: u64,
    violations: u64,
    worst: Option<(f64, String)>,
    failures: Vec<String>,
    notes: Vec<String>,
    by_check: BTreeMap<String, f64>,
}

impl Agg {
    fn slack(&mut self, slack: f64, tol: f64, at: impl FnOnce() -> String) {
        self.checked += 1;
        let bad = slack.is_nan() || slack > tol;
        if bad {
            self.violations += 1;
        }
        if self.worst.as_ref().is_none_or(|(w, _)| slack > *w || slack.is_nan()) || (bad && self.failures.len() < 3) {
            let at = at();
            if bad && self.failures.len() < 3 {
                self.failures.push(at.clone());
            }
            if self.worst.as_ref().is_none_or(|(w, _)| slack > *w || slack.is_nan()) {
                self.worst = Some((slack, at));
            }
        }
    }

    fn fail(&mut self, msg: String) {
        self.checked += 1;
        self.violations += 1;
        if self.failures.len() < 3 {
            self.failures.push(msg);
        }
    }

    fn absorb(&mut self, report: &CertificateReport, names: &[&str], ctx: &str) {
        for name in names {
            match report.check(name) {
                Some(c) => self.summary(c, ctx),
                None => self.fail(format!("{ctx}: check {name:?} missing (replay failed?)")),
            }
        }
    }

    fn summary(&mut self, c: &CheckSummary, ctx: &str) {
        self.checked += c.checked;
        self.violations += c.violations;
        if let Some(s) = c.worst_slack {
            let e = self.by_check.entry(c.name.clone()).or_insert(f64::NEG_INFINITY);
            *e = e.max(s);
        }
        let at = || format!("{ctx}: {} at {}", c.name, c.worst_at.as_deref().unwrap_or("-"));
        if c.violations > 0 && self.failures.len() < 3 {
            self.failures.push(at());
        }
        if let Some(s) = c.worst_slack {
            if self.worst.as_ref().is_none_or(|(w, _)| s > *w) {
                self.worst = Some((s, at()));
            }
        }
    }

    fn finish(self, id: u8, name: &'static str) -> CriterionOutcome {
        let passed = self.violations == 0 && self.checked > 0;
        let mut detail = Vec::new();
        if !self.failures.is_empty() {
            detail.push(format!("failures: {}", self.failures.join("; ")));
        } else if let Some((_, at)) = &self.worst {
            detail.push(format!("worst at {at}"));
        }
        if self.by_check.len() > 1 {
            let parts: Vec<String> = self.by_check.iter().map(|(k, v)| format!("{k} {v:.3e}")).collect();
            detail.push(format!("worst by check: {}", parts.join(", ")));
        }
        detail.extend(self.notes);
        if self.checked == 0 {
            detail.push("nothing was checked".into());
        }
        CriterionOutcome {
            id,
            name,
            passed,
            checked: self.checked,
            violations: self.violations,
            worst_slack: self.worst.map(|w| w.0),
            detail: detail.join("; "),
        }
    }
}

fn table_function() -> PowerFunction {
    PowerFunction::table(&[[0.5, 0.2], [1.0, 0.6], [2.0, 2.0], [4.0, 7.0]]).expect("fixed table is convex")
}

/// Flow-mode suite member `s`: up to 8 machines and 50 jobs, cycling through
/// every rate, weight, size and arrival model.
pub fn flow_config(base_seed: u64, s: usize) -> GeneratorConfig {
    let m = 1 + s % 8;
    let n = 1 + (s * 37 + 11) % 50;
    let rate_model = match s % 3 {
        0 => RateModel::Uniform { lo: 0.25, hi: 4.0 },
        1 => RateModel::ZeroInflated { prob_zero: vec![0.3], lo: 0.5, hi: 2.0 },
        _ => RateModel::Related {
            speeds: (0..m).map(|i| 0.5 + 0.5 * (i % 4) as f64).collect(),
            demand_lo: 0.5,
            demand_hi: 2.0,
        },
    };
    let weight_model = if s.is_multiple_of(2) {
        WeightModel::UniformInt { lo: 1, hi: 8 }
    } else {
        WeightModel::PowerLaw { exponent: 1.5, cap: 64 }
    };
    let size_model =
        if s % 4 < 2 { SizeModel::Uniform { lo: 0.2, hi: 3.0 } } else { SizeModel::Exponential { mean: 1.0 } };
    let arrival_model =
        if s.is_multiple_of(5) { ArrivalModel::BatchAtZero } else { ArrivalModel::Poisson { rate: 0.5 * m as f64 } };
    GeneratorConfig {
        machine_count: m,
        job_count: n,
        seed: base_seed.wrapping_mul(1_000_003).wrapping_add(s as u64),
        rate_model,
        weight_model,
        size_model,
        arrival_model,
        power_palette: None,
    }
}

/// Energy-mode suite member `s`: the flow member with a power palette drawn
/// from `s^1.5`, `s^2`, `s^3` and a fixed table.
pub fn energy_config(base_seed: u64, s: usize) -> GeneratorConfig {
    let all = [
        PowerFunction::polynomial(1.5).expect("valid"),
        PowerFunction::polynomial(2.0).expect("valid"),
        PowerFunction::polynomial(3.0).expect("valid"),
        table_function(),
    ];
    let palette = match s % 5 {
        4 => {
            let mut v = all.to_vec();
            v.rotate_left(s % 4);
            v
        }
        r => vec![all[r].clone()],
    };
    let mut cfg = flow_config(base_seed ^ 0x5eed_e4e7, s);
    cfg.power_palette = Some(palette);
    cfg
}

pub fn energy_k(s: usize) -> u32 {
    FLOW_KS[s % FLOW_KS.len()]
}

/// Migration suite member `s`: weights spanning `1..=1024`, up to 200 jobs,
/// and the threshold `1 + ε_m` for `ε_m` cycling over `1, 1/2, 1/4`.
pub fn migration_case(base_seed: u64, s: usize, count: usize) -> (GeneratorConfig, RunSettings) {
    let n = 50 + (150 * s) / count.saturating_sub(1).max(1);
    let m = 2 + s % 7;
    let weight_model = if s.is_multiple_of(2) {
        WeightModel::UniformInt { lo: 1, hi: 1024 }
    } else {
        WeightModel::PowerLaw { exponent: 0.8, cap: 1024 }
    };
    let cfg = GeneratorConfig {
        machine_count: m,
        job_count: n.min(200),
        seed: base_seed.wrapping_mul(7_000_003).wrapping_add(s as u64) ^ 0x313,
        rate_model: RateModel::Uniform { lo: 0.25, hi: 4.0 },
        weight_model,
        size_model: SizeModel::Exponential { mean: 1.0 },
        arrival_model: ArrivalModel::Poisson { rate: m as f64 },
        power_palette: None,
    };
    let eps_m = [1.0, 0.5, 0.25][s % 3];
    let settings = RunSettings {
        cfg: PolicyConfig::analysis(2, Mode::Flow).expect("k = 2 is valid"),
        policy: MigrationPolicy::with_threshold(1.0 + eps_m).expect("threshold > 1"),
        speed_factor: 1.0,
    };
    (cfg, settings)
}

/// Tiny fixture: at most 4 jobs and 2 machines, rates in `{0.5, 1, 2}`,
/// sizes in `{1, 2}`, integer releases.
pub fn tiny_fixture(base_seed: u64, idx: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_mul(31).wrapping_add(idx as u64) ^ 0x7171);
    let m = 1 + idx % 2;
    let n = 1 + (idx / 2) % 4;
    let rates = [0.5, 1.0, 2.0];
    let jobs = (0..n)
        .map(|j| Job {
            id: format!("t{j}"),
            release: rng.random_range(0..=3) as f64,
            size: [1.0, 2.0][rng.random_range(0..2)],
            weight: rng.random_range(1..=3),
            rates: (0..m).map(|_| rates[rng.random_range(0..3)]).collect(),
        })
        .collect();
    Instance::flow(m, jobs)
}

struct CertRun {
    ctx: String,
    report: Result<CertificateReport, String>,
    drops: usize,
}

fn certify_run(instance: &Instance, settings: &RunSettings, tol: &Tolerances, ctx: String) -> CertRun {
    let out = run(instance, settings).map_err(|e| e.to_string()).and_then(|res| {
        certify(instance, settings, &res.log, tol).map(|r| (r, res.utility_drops.len())).map_err(|e| e.to_string())
    });
    match out {
        Ok((report, drops)) => CertRun { ctx, report: Ok(report), drops },
        Err(e) => CertRun { ctx, report: Err(e), drops: 0 },
    }
}

fn absorb_runs(agg: &mut Agg, runs: &[CertRun], names: &[&str]) {
    for r in runs {
        match &r.report {
            Ok(report) => agg.absorb(report, names, &r.ctx),
            Err(e) => agg.fail(format!("{}: {e}", r.ctx)),
        }
    }
}

/// Runs every criterion. Outcomes are ordered by criterion number.
pub fn run_suite(opts: &SuiteOptions) -> Vec<CriterionOutcome> {
    let tol = opts.tolerances;

    let flow_runs: Vec<CertRun> = (0..opts.instances)
        .into_par_iter()
        .flat_map_iter(|s| {
            let cfg = flow_config(opts.seed, s);
            let inst = generate(&cfg);
            FLOW_KS
                .iter()
                .map(move |&k| {
                    let ctx = format!("flow #{s} k={k}");
                    match &inst {
                        Ok(inst) => match RunSettings::analysis(k, Mode::Flow) {
                            Ok(settings) => certify_run(inst, &settings, &tol, ctx),
                            Err(e) => CertRun { ctx, report: Err(e.to_string()), drops: 0 },
                        },
                        Err(e) => CertRun { ctx, report: Err(e.to_string()), drops: 0 },
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let energy_runs: Vec<CertRun> = (0..opts.instances)
        .into_par_iter()
        .map(|s| {
            let k = energy_k(s);
            let ctx = format!("energy #{s} k={k}");
            match generate(&energy_config(opts.seed, s))
                .and_then(|inst| Ok((inst, RunSettings::analysis(k, Mode::Energy)?)))
            {
                Ok((inst, settings)) => certify_run(&inst, &settings, &tol, ctx),
                Err(e) => CertRun { ctx, report: Err(e.to_string()), drops: 0 },
            }
        })
        .collect();

    let mut out = Vec::with_capacity(12);

    let mut a = Agg::default();
    absorb_runs(&mut a, &flow_runs, &["accounting identity", "pointwise delay identity"]);
    out.push(a.finish(1, "accounting identity"));

    let mut a = Agg::default();
    absorb_runs(&mut a, &flow_runs, &["dual objective identity"]);
    out.push(a.finish(2, "flow dual-objective identity"));

    let mut a = Agg::default();
    absorb_runs(&mut a, &flow_runs, &["dual constraints", "dual constraints (right endpoints)", "dual signs"]);
    out.push(a.finish(3, "dual feasibility (flow)"));

    let mut a = Agg::default();
    absorb_runs(
        &mut a,
        &energy_runs,
        &["dual constraints", "dual constraints (right endpoints)", "dual signs", "dual objective bound"],
    );
    out.push(a.finish(4, "dual feasibility (energy)"));

    let mut a = Agg::default();
    let lemmas = ["first delay lemma", "second delay lemma", "second delay lemma (full size)"];
    absorb_runs(&mut a, &flow_runs, &lemmas);
    absorb_runs(&mut a, &energy_runs, &lemmas);
    out.push(a.finish(5, "delay lemmas"));

    let migration = migration_criterion(opts);

    let mut a = Agg::default();
    absorb_runs(&mut a, &flow_runs, &["utility monotonicity", "equilibrium"]);
    absorb_runs(&mut a, &energy_runs, &["utility monotonicity", "equilibrium"]);
    for r in flow_runs.iter().chain(&energy_runs) {
        a.slack(r.drops as f64, 0.0, || format!("{}: {} utility drops during moves", r.ctx, r.drops));
    }
    for (ctx, drops) in &migration.drops {
        a.slack(*drops as f64, 0.0, || format!("{ctx}: {drops} utility drops during moves"));
    }
    out.push(a.finish(6, "utility monotonicity"));

    out.push(migration.outcome);

    let mut a = Agg::default();
    absorb_runs(&mut a, &energy_runs, &["energy identity"]);
    out.push(a.finish(8, "energy identity"));

    let (tiny, tiny_replays) = competitive_criterion(opts);
    out.push(tiny);
    out.push(conjugate_criterion(opts));
    out.push(round_robin_criterion(opts));

    let mut a = determinism_checks(opts);
    absorb_runs(&mut a, &flow_runs, &["replay"]);
    absorb_runs(&mut a, &energy_runs, &["replay"]);
    for (ctx, violations) in migration.replays.iter().chain(&tiny_replays) {
        a.slack(*violations as f64, 0.0, || format!("{ctx}: {violations} replay violations"));
    }
    out.push(a.finish(12, "determinism and replay"));
    out
}

struct MigrationOutcome {
    outcome: CriterionOutcome,
    drops: Vec<(String, usize)>,
    replays: Vec<(String, usize)>,
}

fn migration_criterion(opts: &SuiteOptions) -> MigrationOutcome {
    let count = opts.migration_instances;
    let results: Vec<_> = (0..count)
        .into_par_iter()
        .map(|s| {
            let (cfg, settings) = migration_case(opts.seed, s, count);
            let ctx = format!("migration #{s} n={} theta={}", cfg.job_count, settings.policy.threshold);
            let out = generate(&cfg).and_then(|inst| {
                let res = run(&inst, &settings)?;
                Ok((inst, res))
            });
            (ctx, settings, out)
        })
        .collect();
    let mut a = Agg::default();
    let mut drops = Vec::new();
    let mut replays = Vec::new();
    let mut max_weight_ratio: f64 = 0.0;
    let mut max_used = 0u32;
    for (ctx, settings, out) in results {
        match out {
            Ok((inst, res)) => {
                max_weight_ratio = max_weight_ratio.max(inst.weight_ratio());
                let Some(bound) = settings.policy.migration_bound(&inst) else {
                    a.fail(format!("{ctx}: no migration bound"));
                    continue;
                };
                for (j, &c) in res.migrations.iter().enumerate() {
                    max_used = max_used.max(c);
                    a.slack(c as f64 - bound as f64, 0.0, || {
                        format!("{ctx}: job {} migrated {c} times, bound {bound}", JobId(j))
                    });
                }
                drops.push((ctx.clone(), res.utility_drops.len()));
                replays.push((ctx, res.replay_check(&inst).len()));
            }
            Err(e) => a.fail(format!("{ctx}: {e}")),
        }
    }
    a.notes.push(format!("most migrations by one job {max_used}, largest weight ratio {max_weight_ratio}"));
    MigrationOutcome { outcome: a.finish(7, "migration bound"), drops, replays }
}

fn competitive_criterion(opts: &SuiteOptions) -> (CriterionOutcome, Vec<(String, usize)>) {
    let bound = 2.0 * 12.0 * 1.1;
    let results: Vec<_> = (0..opts.tiny_fixtures)
        .into_par_iter()
        .map(|idx| {
            let inst = tiny_fixture(opts.seed, idx);
            let out = (|| {
                let (opt, _) = brute_force_opt(&inst, &OracleOptions::new(1.0))?;
                let settings = RunSettings::analysis(1, Mode::Flow)?;
                let res = run(&inst, &settings)?;
                let report = certify(&inst, &settings, &res.log, &opts.tolerances)?;
                Ok::<_, selfmig_core::Error>((
                    opt,
                    res.weighted_flow,
                    report.dual_objective,
                    res.replay_check(&inst).len(),
                ))
            })();
            (format!("tiny #{idx} (n={}, m={})", inst.job_count(), inst.machine_count), out)
        })
        .collect();
    let mut a = Agg::default();
    let mut replays = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for (ctx, out) in results {
        match out {
            Ok((opt, alg, dual, replay)) => {
                worst_ratio = worst_ratio.max(alg / opt);
                a.slack((alg - bound * opt) / opt.max(1.0), 0.0, || format!("{ctx}: ALG {alg} vs OPT {opt}"));
                match dual {
                    Some(d) => a.slack((d - 2.0 * 1.1 * opt) / opt.max(1.0), 0.0, || {
                        format!("{ctx}: dual objective {d} vs OPT {opt}")
                    }),
                    None => a.fail(format!("{ctx}: no dual objective")),
                }
                replays.push((ctx, replay));
            }
            Err(e) => a.fail(format!("{ctx}: {e}")),
        }
    }
    a.notes.push(format!("largest observed ALG/OPT {worst_ratio:.3} (bound {bound})"));
    (a.finish(9, "competitive ratio on tiny fixtures"), replays)
}

fn random_table(rng: &mut ChaCha8Rng) -> PowerFunction {
    let steps = rng.random_range(1..6);
    let mut points = Vec::with_capacity(steps);
    let (mut s, mut f, mut slope) = (0.0, 0.0, rng.random_range(0.05..2.0));
    for _ in 0..steps {
        let width = rng.random_range(0.1..3.0);
        s += width;
        f += slope * width;
        points.push([s, f]);
        slope += rng.random_range(0.05..2.0);
    }
    PowerFunction::table(&points).expect("increasing slopes")
}

fn conjugate_criterion(opts: &SuiteOptions) -> CriterionOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xc0de);
    let mut a = Agg::default();
    for i in 0..opts.samples {
        let pf = match i % 5 {
            0 => PowerFunction::polynomial(1.5),
            1 => PowerFunction::polynomial(2.0),
            2 => PowerFunction::polynomial(3.0),
            3 => PowerFunction::polynomial(rng.random_range(1.05..5.0)),
            _ => Ok(random_table(&mut rng)),
        };
        let pf = match pf {
            Ok(pf) => pf,
            Err(e) => {
                a.fail(format!("sample {i}: {e}"));
                continue;
            }
        };
        let w = 10f64.powf(rng.random_range(-6.0..6.0));
        let w2 = w * 10f64.powf(rng.random_range(0.0..3.0));
        match (pf.eval_g(w), pf.eval_g(w2)) {
            (Ok(g), Ok(g2)) => {
                let conj = pf.eval_conjugate(w / g);
                a.slack(conj - w - 1e-9, 0.0, || format!("sample {i}: f*(w/g(w)) = {conj} for w = {w}"));
                let (r, r2) = (g / w, g2 / w2);
                a.slack(r2 - r - 1e-9, 0.0, || format!("sample {i}: g(w)/w rose from {r} to {r2}"));
            }
            (Err(e), _) | (_, Err(e)) => a.fail(format!("sample {i}: {e}")),
        }
    }
    a.finish(10, "conjugate lemma and g(w)/w")
}

fn round_robin_criterion(opts: &SuiteOptions) -> CriterionOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xbeef);
    let mut a = Agg::default();
    for q_idx in 0..opts.queues {
        let len = rng.random_range(1..=40);
        let eta = rng.random_range(0.5..8.0);
        let mut q = QueueState::new(0);
        let mut weights = Vec::with_capacity(len);
        for j in 0..len {
            let w = rng.random_range(1..=1000u64);
            weights.push(w);
            if let Err(e) = q.enqueue_tail(JobId(j), w) {
                a.fail(format!("queue {q_idx}: {e}"));
            }
        }
        let total: u64 = weights.iter().sum();
        let nu = PolicyConfig::round_robin(eta, Mode::Flow).and_then(|cfg| rate_assignment(&q, &cfg, None));
        match nu {
            Ok(nu) => {
                for (j, (v, &w)) in nu.iter().zip(&weights).enumerate() {
                    let expected = eta * w as f64 / total as f64;
                    a.slack((v - expected).abs(), 1e-12, || format!("queue {q_idx} job {j}: {v} vs {expected}"));
                }
            }
            Err(e) => a.fail(format!("queue {q_idx}: {e}")),
        }
    }
    a.finish(11, "k = 0 is weighted round robin")
}

/// Text artifacts of one generate, run, certify pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub instance: String,
    pub result: String,
    pub log: String,
    pub timeseries: String,
    pub certificate: String,
}

/// Generates, serializes, reloads, runs and certifies from the serialized log,
/// the same way the command line does.
pub fn pipeline(cfg: &GeneratorConfig, settings: &RunSettings, tol: &Tolerances) -> anyhow::Result<Artifacts> {
    let generated = generate(cfg)?;
    let instance_text = instance_to_string(&generated);
    let inst = instance_from_str(&instance_text)?;
    anyhow::ensure!(inst == generated, "instance changed on reload");
    let res = run(&inst, settings)?;
    let log_text = log_to_string(&inst, settings, &res.log);
    let file = log_from_str(&log_text)?;
    anyhow::ensure!(file.log == res.log, "event log changed on reload");
    let report = certify(&file.instance, &file.settings, &file.log, tol)?;
    anyhow::ensure!(report.passed, "certificate failed: {:?}", report.failed().map(|c| &c.name).collect::<Vec<_>>());
    Ok(Artifacts {
        instance: instance_text,
        result: result_to_string(&inst, &res),
        log: log_text,
        timeseries: timeseries_csv(&inst, &res)?,
        certificate: certificate_to_string(&report, tol),
    })
}

fn determinism_checks(opts: &SuiteOptions) -> Agg {
    let mut a = Agg::default();
    for s in 0..opts.determinism_seeds {
        for (mode, cfg, k) in
            [("flow", flow_config(opts.seed, s), 2), ("energy", energy_config(opts.seed, s), energy_k(s))]
        {
            let ctx = format!("pipeline {mode} #{s}");
            let settings = match RunSettings::analysis(k, cfg.mode()) {
                Ok(s) => s,
                Err(e) => {
                    a.fail(format!("{ctx}: {e}"));
                    continue;
                }
            };
            match (pipeline(&cfg, &settings, &opts.tolerances), pipeline(&cfg, &settings, &opts.tolerances)) {
                (Ok(x), Ok(y)) => {
                    let same = x == y;
                    a.slack(if same { 0.0 } else { 1.0 }, 0.0, || format!("{ctx}: byte-identical artifacts {same}"))
                }
                (Err(e), _) | (_, Err(e)) => a.fail(format!("{ctx}: {e:#}")),
            }
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_passes() {
        let opts = SuiteOptions {
            instances: 6,
            migration_instances: 3,
            tiny_fixtures: 4,
            samples: 50,
            queues: 50,
            determinism_seeds: 1,
            ..SuiteOptions::default()
        };
        let outcomes = run_suite(&opts);
        assert_eq!(outcomes.len(), 12);
        for (i, o) in outcomes.iter().enumerate() {
            assert_eq!(o.id as usize, i + 1);
            assert!(o.passed, "{o}");
        }
    }

    #[test]
    fn suites_are_valid_and_bounded() {
        for s in 0..100 {
            let f = generate(&flow_config(0, s)).unwrap();
            assert!(f.machine_count <= 8 && f.job_count() <= 50);
            assert!(f.validate().is_empty());
            let e = generate(&energy_config(0, s)).unwrap();
            assert_eq!(e.mode, Mode::Energy);
        }
        for idx in 0..24 {
            let t = tiny_fixture(0, idx);
            assert!(t.job_count() <= 4 && t.machine_count <= 2);
            assert!(t.validate().is_empty());
        }
    }
}
