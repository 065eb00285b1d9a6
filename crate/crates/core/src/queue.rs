//! Per-machine virtual queues and the WLAPS(k) rate assignment.
//!
//! A queue orders jobs by the time they arrived on the machine, migrations
//! included. The job at position `r` has prefix weight `𝒲` (the weight strictly
//! ahead of it) and receives the share
//! `((𝒲 + w)^(k+1) - 𝒲^(k+1)) / W^(k+1)` of the machine's processing power,
//! which is `eta` in flow mode and `g(W)` in energy mode.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::instance::{JobId, Mode};
use crate::math::{powi, round};
use crate::power::PowerFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueEntry {
    pub job: JobId,
    pub weight: u64,
    /// Total weight strictly ahead of this job.
    pub prefix_weight: u64,
}

impl QueueEntry {
    /// `𝒲 + w`, the load a job sees from its own position.
    pub fn load(&self) -> u64 {
        self.prefix_weight + self.weight
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueState {
    machine: usize,
    entries: Vec<QueueEntry>,
    total_weight: u64,
}

impl QueueState {
    pub fn new(machine: usize) -> Self {
        QueueState { machine, entries: Vec::new(), total_weight: 0 }
    }

    pub fn machine(&self) -> usize {
        self.machine
    }

    /// Entries head first.
    pub fn entries(&self) -> &[QueueEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `W(i, t)`.
    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    pub fn position(&self, job: JobId) -> Option<usize> {
        self.entries.iter().position(|e| e.job == job)
    }

    pub fn entry(&self, job: JobId) -> Option<&QueueEntry> {
        self.entries.iter().find(|e| e.job == job)
    }

    /// 1-based rank, head = 1.
    pub fn rank(&self, job: JobId) -> Option<usize> {
        self.position(job).map(|p| p + 1)
    }

    pub fn contains(&self, job: JobId) -> bool {
        self.position(job).is_some()
    }

    pub fn enqueue_tail(&mut self, job: JobId, weight: u64) -> Result<()> {
        if self.contains(job) {
            return Err(Error::DuplicateJob { job, machine: self.machine });
        }
        self.entries.push(QueueEntry { job, weight, prefix_weight: self.total_weight });
        self.total_weight += weight;
        Ok(())
    }

    /// Deletes `job`, keeping the order of the others.
    pub fn remove(&mut self, job: JobId) -> Result<QueueEntry> {
        let pos = self.position(job).ok_or(Error::AbsentJob { job, machine: self.machine })?;
        let removed = self.entries.remove(pos);
        for e in &mut self.entries[pos..] {
            e.prefix_weight -= removed.weight;
        }
        self.total_weight -= removed.weight;
        Ok(removed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicyConfig {
    /// Smoothing exponent; `k = 1/epsilon`. Zero gives weighted round robin.
    pub k: u32,
    /// Total processing power per machine in flow mode.
    pub eta: f64,
    pub mode: Mode,
}

impl PolicyConfig {
    pub fn new(k: u32, eta: f64, mode: Mode) -> Result<Self> {
        if k < 1 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(eta > 1.0 && eta.is_finite()) {
            return Err(Error::Config(format!("eta {eta} must be > 1")));
        }
        Ok(PolicyConfig { k, eta, mode })
    }

    /// `eta = 1 + 3/k`, the setting under which the dual fit goes through.
    pub fn analysis(k: u32, mode: Mode) -> Result<Self> {
        if k < 1 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        Self::new(k, 1.0 + 3.0 / k as f64, mode)
    }

    /// Analysis preset from `epsilon`; `1/epsilon` must be an integer.
    pub fn from_epsilon(epsilon: f64, mode: Mode) -> Result<Self> {
        Self::analysis(k_from_epsilon(epsilon)?, mode)
    }

    /// `k = 0` weighted round robin with the given total power.
    pub fn round_robin(eta: f64, mode: Mode) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("eta {eta} must be > 0")));
        }
        Ok(PolicyConfig { k: 0, eta, mode })
    }

    pub fn epsilon(&self) -> f64 {
        1.0 / self.k as f64
    }

    pub fn is_analysis_preset(&self) -> bool {
        self.k >= 1 && (self.eta - (1.0 + 3.0 / self.k as f64)).abs() <= 1e-12
    }
}

/// Converts `epsilon` to the integer `k = 1/epsilon`, rejecting non-integral ratios.
pub fn k_from_epsilon(epsilon: f64) -> Result<u32> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Config(format!("epsilon {epsilon} must lie in (0, 1]")));
    }
    let inv = 1.0 / epsilon;
    let k = round(inv);
    if (inv - k).abs() > 1e-9 * inv {
        return Err(Error::Config(format!("1/epsilon = {inv} is not an integer")));
    }
    Ok(k as u32)
}

/// Fraction of the machine's power each job receives, head first. Sums to 1.
pub fn wlaps_shares(queue: &QueueState, k: u32) -> Result<Vec<f64>> {
    if queue.is_empty() {
        return Err(Error::EmptyQueue { machine: queue.machine });
    }
    let total = queue.total_weight as f64;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(queue.len());
    for (idx, e) in queue.entries.iter().enumerate() {
        // The tail's normalised load is exactly 1.
        let cur = if idx + 1 == queue.len() { 1.0 } else { powi(e.load() as f64 / total, k + 1) };
        out.push(cur - prev);
        prev = cur;
    }
    Ok(out)
}

/// Flow-mode rates `ν_j`, aligned with `queue.entries()`. They sum to `eta`.
pub fn rate_assignment_flow(queue: &QueueState, cfg: &PolicyConfig) -> Result<Vec<f64>> {
    Ok(wlaps_shares(queue, cfg.k)?.into_iter().map(|s| cfg.eta * s).collect())
}

/// Energy-mode rates, aligned with `queue.entries()`. They sum to `g(W)`, so
/// the machine's power draw equals its alive weight.
pub fn rate_assignment_energy(queue: &QueueState, cfg: &PolicyConfig, pf: &PowerFunction) -> Result<Vec<f64>> {
    let shares = wlaps_shares(queue, cfg.k)?;
    let speed = pf.eval_g(queue.total_weight as f64)?;
    Ok(shares.into_iter().map(|s| speed * s).collect())
}

/// Rates for either mode; `pf` is required in energy mode.
pub fn rate_assignment(queue: &QueueState, cfg: &PolicyConfig, pf: Option<&PowerFunction>) -> Result<Vec<f64>> {
    match cfg.mode {
        Mode::Flow => rate_assignment_flow(queue, cfg),
        Mode::Energy => rate_assignment_energy(queue, cfg, pf.ok_or(Error::MissingPowerFunctions)?),
    }
}

/// Utility of processing at `rate` behind load `load = 𝒲 + w`:
/// `rate / load` in flow mode and `g(load) * rate / load` in energy mode.
pub fn utility_at(mode: Mode, rate: f64, load: u64, pf: Option<&PowerFunction>) -> Result<f64> {
    if rate == 0.0 {
        return Ok(0.0);
    }
    let x = load as f64;
    match mode {
        Mode::Flow => Ok(rate / x),
        Mode::Energy => {
            let pf = pf.ok_or(Error::MissingPowerFunctions)?;
            Ok(pf.eval_g(x)? * rate / x)
        }
    }
}

/// `φ(j, t)` of a queued job, given its rate `ℓ_ij` on this machine.
pub fn virtual_utility(
    job: JobId,
    queue: &QueueState,
    rate: f64,
    mode: Mode,
    pf: Option<&PowerFunction>,
) -> Result<f64> {
    let e = queue.entry(job).ok_or(Error::AbsentJob { job, machine: queue.machine })?;
    utility_at(mode, rate, e.load(), pf)
}
