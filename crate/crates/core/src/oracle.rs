//! Exact discrete-time optimum for tiny flow-mode instances, and the two
//! comparison baselines.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::game::MigrationPolicy;
use crate::instance::{Instance, JobId, Mode};
use crate::lp::{default_horizon, first_slot};
use crate::math::ceil;
use crate::queue::PolicyConfig;
use crate::sim::{run, RunSettings, ScheduleResult};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSchedule {
    pub slot_length: f64,
    pub horizon: usize,
    /// `assignment[s][i]`: job run by machine `i` during slot `s`.
    pub assignment: Vec<Vec<Option<JobId>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub slot_length: f64,
    /// Slot count; defaults to the LP horizon divided by the slot length.
    pub horizon: Option<usize>,
    /// Maximum number of memoized states.
    pub state_cap: usize,
}

impl OracleOptions {
    pub fn new(slot_length: f64) -> Self {
        OracleOptions { slot_length, horizon: None, state_cap: 2_000_000 }
    }
}

type Key = (usize, Vec<u64>);

struct Search<'a> {
    instance: &'a Instance,
    slot: f64,
    horizon: usize,
    first: Vec<usize>,
    cap: usize,
    memo: BTreeMap<Key, (f64, Vec<Option<JobId>>)>,
}

impl Search<'_> {
    fn done(&self, j: usize, residual: f64) -> bool {
        residual <= 1e-12 * self.instance.jobs[j].size
    }

    /// Minimum additional cost from slot `s` with the given residuals.
    fn solve(&mut self, s: usize, residual: &[f64]) -> Result<f64> {
        let n = residual.len();
        if (0..n).all(|j| self.done(j, residual[j])) {
            return Ok(0.0);
        }
        if s >= self.horizon {
            return Ok(f64::INFINITY);
        }
        let key = (s, residual.iter().map(|r| r.to_bits()).collect::<Vec<_>>());
        if let Some((cost, _)) = self.memo.get(&key) {
            return Ok(*cost);
        }
        let m = self.instance.machine_count;
        let mut best = (f64::INFINITY, vec![None; m]);
        let mut choice = vec![None; m];
        self.enumerate(s, residual, 0, &mut choice, &mut best)?;
        if self.memo.len() >= self.cap {
            return Err(Error::OracleCapExceeded(self.cap));
        }
        self.memo.insert(key, best.clone());
        Ok(best.0)
    }

    fn enumerate(
        &mut self,
        s: usize,
        residual: &[f64],
        machine: usize,
        choice: &mut Vec<Option<JobId>>,
        best: &mut (f64, Vec<Option<JobId>>),
    ) -> Result<()> {
        let m = self.instance.machine_count;
        if machine == m {
            let cost = self.step_cost(s, residual, choice)?;
            if cost < best.0 {
                *best = (cost, choice.clone());
            }
            return Ok(());
        }
        let mut any = false;
        for j in 0..residual.len() {
            let job = &self.instance.jobs[j];
            let free = !choice[..machine].contains(&Some(JobId(j)));
            if free && self.first[j] <= s && !self.done(j, residual[j]) && job.rates[machine] > 0.0 {
                any = true;
                choice[machine] = Some(JobId(j));
                self.enumerate(s, residual, machine + 1, choice, best)?;
            }
        }
        // Idling is dominated whenever some job could run here instead.
        if !any {
            choice[machine] = None;
            self.enumerate(s, residual, machine + 1, choice, best)?;
        }
        choice[machine] = None;
        Ok(())
    }

    fn step_cost(&mut self, s: usize, residual: &[f64], choice: &[Option<JobId>]) -> Result<f64> {
        let mut next = residual.to_vec();
        for (i, c) in choice.iter().enumerate() {
            if let Some(j) = c {
                next[j.0] -= self.instance.jobs[j.0].rates[i] * self.slot;
            }
        }
        let end = (s + 1) as f64 * self.slot;
        let mut now = 0.0;
        for (j, job) in self.instance.jobs.iter().enumerate() {
            if !self.done(j, residual[j]) && self.done(j, next[j]) {
                next[j] = 0.0;
                now += job.weight as f64 * (end - job.release);
            }
        }
        Ok(now + self.solve(s + 1, &next)?)
    }
}

/// Minimum `Σ w_j (C_j - r_j)` over slotted schedules, where a machine runs at
/// most one job per slot, a job runs on at most one machine per slot, slot
/// `s` is usable by `j` when `s L >= r_j`, and `C_j` is the end of the slot in
/// which the job's work is exhausted. Any such schedule is feasible in
/// continuous time, so the result bounds the continuous optimum from above.
pub fn brute_force_opt(instance: &Instance, options: &OracleOptions) -> Result<(f64, DiscreteSchedule)> {
    instance.ensure_valid()?;
    if instance.mode != Mode::Flow {
        return Err(Error::Config("the oracle handles flow mode only".into()));
    }
    let l = options.slot_length;
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Config(format!("slot length {l} must be positive")));
    }
    let horizon = options.horizon.unwrap_or_else(|| ceil(default_horizon(instance) / l) as usize);
    let mut search = Search {
        instance,
        slot: l,
        horizon,
        first: instance.jobs.iter().map(|j| first_slot(j.release, l)).collect(),
        cap: options.state_cap,
        memo: BTreeMap::new(),
    };
    let start: Vec<f64> = instance.jobs.iter().map(|j| j.size).collect();
    let cost = search.solve(0, &start)?;
    if !cost.is_finite() {
        return Err(Error::HorizonTooShort(horizon));
    }

    // Walk the memoized choices forward to recover the schedule.
    let mut assignment = Vec::new();
    let mut residual = start;
    let mut s = 0;
    while !(0..residual.len()).all(|j| search.done(j, residual[j])) {
        let key = (s, residual.iter().map(|r| r.to_bits()).collect::<Vec<_>>());
        let (_, choice) = search.memo.get(&key).cloned().ok_or(Error::HorizonTooShort(horizon))?;
        for (i, c) in choice.iter().enumerate() {
            if let Some(j) = c {
                residual[j.0] -= instance.jobs[j.0].rates[i] * l;
                if search.done(j.0, residual[j.0]) {
                    residual[j.0] = 0.0;
                }
            }
        }
        assignment.push(choice);
        s += 1;
    }
    assignment.resize(horizon, vec![None; instance.machine_count]);
    Ok((cost, DiscreteSchedule { slot_length: l, horizon, assignment }))
}

/// The simulator with `k = 0` rates, which are weighted round robin.
pub fn run_wrr_baseline(
    instance: &Instance,
    eta: f64,
    policy: MigrationPolicy,
    speed_factor: f64,
) -> Result<ScheduleResult> {
    let cfg = PolicyConfig::round_robin(eta, instance.mode)?;
    run(instance, &RunSettings { cfg, policy, speed_factor })
}

/// Dispatch on arrival by best offer, never migrate.
pub fn run_nonmigratory_greedy(instance: &Instance, cfg: PolicyConfig, speed_factor: f64) -> Result<ScheduleResult> {
    if instance.mode != Mode::Flow {
        return Err(Error::Config("the non-migratory baseline is defined for flow mode".into()));
    }
    run(instance, &RunSettings { cfg, policy: MigrationPolicy::frozen(), speed_factor })
}
