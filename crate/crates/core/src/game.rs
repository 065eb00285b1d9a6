//! Selfish migration: arrival dispatch, sequential best response and the
//! equilibrium it converges to.
//!
//! A job on machine `i` with load `𝒲 + w` has utility `φ = ℓ_ij / (𝒲 + w)`
//! (energy mode: `g_i(𝒲 + w) ℓ_ij / (𝒲 + w)`). Moving to machine `d` would put
//! it at the tail of `d`'s queue, so it is offered `ℓ_dj / (W(d) + w)`. A move
//! raises the mover's utility and leaves every other job's utility unchanged
//! or higher, so utilities only grow over a job's lifetime.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::instance::{Instance, JobId};
use crate::math::ceil_log;
use crate::queue::{utility_at, PolicyConfig, QueueState};

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    queues: Vec<QueueState>,
    assignment: Vec<Option<usize>>,
    pub clock: f64,
}

impl GlobalState {
    pub fn new(machine_count: usize, job_count: usize) -> Self {
        GlobalState {
            queues: (0..machine_count).map(QueueState::new).collect(),
            assignment: alloc::vec![None; job_count],
            clock: 0.0,
        }
    }

    pub fn queues(&self) -> &[QueueState] {
        &self.queues
    }

    pub fn queue(&self, machine: usize) -> &QueueState {
        &self.queues[machine]
    }

    /// `σ(j, t)`, or `None` if the job is not in the system.
    pub fn machine_of(&self, job: JobId) -> Option<usize> {
        self.assignment[job.0]
    }

    /// Active jobs in ascending id order.
    pub fn active_jobs(&self) -> impl Iterator<Item = JobId> + '_ {
        self.assignment.iter().enumerate().filter(|(_, a)| a.is_some()).map(|(j, _)| JobId(j))
    }

    pub fn active_count(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_some()).count()
    }

    /// Puts `job` at the tail of `machine`'s queue.
    pub fn place(&mut self, job: JobId, weight: u64, machine: usize) -> Result<()> {
        if let Some(current) = self.assignment[job.0] {
            return Err(Error::DuplicateJob { job, machine: current });
        }
        self.queues[machine].enqueue_tail(job, weight)?;
        self.assignment[job.0] = Some(machine);
        Ok(())
    }

    /// Removes `job` from the system, returning the machine it was on.
    pub fn evict(&mut self, job: JobId) -> Result<usize> {
        let machine = self.assignment[job.0].ok_or(Error::AbsentJob { job, machine: usize::MAX })?;
        self.queues[machine].remove(job)?;
        self.assignment[job.0] = None;
        Ok(machine)
    }

    fn relocate(&mut self, job: JobId, weight: u64, to: usize) -> Result<usize> {
        let from = self.evict(job)?;
        self.place(job, weight, to)?;
        Ok(from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MigrationPolicy {
    /// A job moves only if its best offer exceeds `threshold * φ`.
    pub threshold: f64,
    /// Moves allowed per equilibrium computation; `None` uses [`MigrationPolicy::default_cap`].
    pub iteration_cap: Option<usize>,
    /// `false` freezes every job on its arrival machine.
    pub migrate: bool,
}

impl MigrationPolicy {
    pub fn with_threshold(threshold: f64) -> Result<Self> {
        if !(threshold >= 1.0 && threshold.is_finite()) {
            return Err(Error::Config(alloc::format!("threshold {threshold} must be >= 1")));
        }
        Ok(MigrationPolicy { threshold, iteration_cap: None, migrate: true })
    }

    /// Plain best response: any strict improvement triggers a move.
    pub fn pure() -> Self {
        MigrationPolicy { threshold: 1.0, iteration_cap: None, migrate: true }
    }

    /// Moves only on a `(1 + 1/k)` improvement, which bounds migrations per job.
    pub fn bounded(k: u32) -> Self {
        MigrationPolicy { threshold: 1.0 + 1.0 / k.max(1) as f64, iteration_cap: None, migrate: true }
    }

    /// No migration after dispatch.
    pub fn frozen() -> Self {
        MigrationPolicy { threshold: 1.0, iteration_cap: None, migrate: false }
    }

    /// Lifetime migration bound per job, `⌈log_θ W⌉ + ⌈log_θ n⌉`, for `θ > 1`.
    pub fn migration_bound(&self, instance: &Instance) -> Option<u32> {
        if self.threshold <= 1.0 {
            return None;
        }
        let n = instance.job_count().max(1) as f64;
        Some(ceil_log(instance.weight_ratio(), self.threshold) + ceil_log(n, self.threshold))
    }

    pub fn default_cap(&self, instance: &Instance) -> usize {
        let n = instance.job_count().max(1);
        match self.migration_bound(instance) {
            Some(b) => n * (b as usize + 1),
            None => n * instance.machine_count.max(1) * 1000,
        }
    }

    pub fn cap(&self, instance: &Instance) -> usize {
        self.iteration_cap.unwrap_or_else(|| self.default_cap(instance))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Move {
    pub job: JobId,
    pub from: usize,
    pub to: usize,
    pub utility_before: f64,
    pub utility_after: f64,
}

/// Current utility `φ(j, t)` of an active job.
pub fn current_utility(instance: &Instance, state: &GlobalState, cfg: &PolicyConfig, job: JobId) -> Result<f64> {
    let machine = state.machine_of(job).ok_or(Error::AbsentJob { job, machine: usize::MAX })?;
    let entry = state.queues[machine].entry(job).ok_or(Error::AbsentJob { job, machine })?;
    utility_at(cfg.mode, instance.rate(machine, job), entry.load(), instance.power(machine))
}

/// Utility `job` would get at the tail of machine `d`; its current utility if already on `d`.
pub fn offer(instance: &Instance, state: &GlobalState, cfg: &PolicyConfig, job: JobId, machine: usize) -> Result<f64> {
    if state.machine_of(job) == Some(machine) {
        return current_utility(instance, state, cfg, job);
    }
    let load = state.queues[machine].total_weight() + instance.job(job).weight;
    utility_at(cfg.mode, instance.rate(machine, job), load, instance.power(machine))
}

/// Best machine other than the current one, lowest index on ties.
fn best_alternative(
    instance: &Instance,
    state: &GlobalState,
    cfg: &PolicyConfig,
    job: JobId,
) -> Result<Option<(usize, f64)>> {
    let current = state.machine_of(job);
    let mut best: Option<(usize, f64)> = None;
    for d in 0..instance.machine_count {
        if Some(d) == current {
            continue;
        }
        let o = offer(instance, state, cfg, job, d)?;
        if best.is_none_or(|(_, b)| o > b) {
            best = Some((d, o));
        }
    }
    Ok(best)
}

/// Dispatches a newly released job to its best offer (lowest index on ties)
/// and enqueues it there.
pub fn assign_arrival(instance: &Instance, state: &mut GlobalState, cfg: &PolicyConfig, job: JobId) -> Result<usize> {
    let (machine, value) = best_alternative(instance, state, cfg, job)?.ok_or(Error::Infeasible(job))?;
    if !(value > 0.0) {
        return Err(Error::Infeasible(job));
    }
    state.place(job, instance.job(job).weight, machine)?;
    Ok(machine)
}

/// Applies the first improving move in ascending job order, if any.
pub fn sbr_step(
    instance: &Instance,
    state: &mut GlobalState,
    cfg: &PolicyConfig,
    policy: &MigrationPolicy,
) -> Result<Option<Move>> {
    if !policy.migrate {
        return Ok(None);
    }
    let active: Vec<JobId> = state.active_jobs().collect();
    for job in active {
        let phi = current_utility(instance, state, cfg, job)?;
        let Some((to, value)) = best_alternative(instance, state, cfg, job)? else {
            continue;
        };
        if value > policy.threshold * phi {
            let from = state.relocate(job, instance.job(job).weight, to)?;
            let utility_after = current_utility(instance, state, cfg, job)?;
            return Ok(Some(Move { job, from, to, utility_before: phi, utility_after }));
        }
    }
    Ok(None)
}

/// Runs best response to a fixed point, reporting each move to `on_move`.
/// Returns the number of moves.
pub fn nash_equilibrium_with(
    instance: &Instance,
    state: &mut GlobalState,
    cfg: &PolicyConfig,
    policy: &MigrationPolicy,
    mut on_move: impl FnMut(&Move, &GlobalState) -> Result<()>,
) -> Result<usize> {
    let cap = policy.cap(instance);
    let mut moves = 0usize;
    let mut recent: Vec<JobId> = Vec::new();
    while let Some(mv) = sbr_step(instance, state, cfg, policy)? {
        moves += 1;
        recent.retain(|&j| j != mv.job);
        recent.push(mv.job);
        if recent.len() > 8 {
            recent.remove(0);
        }
        on_move(&mv, state)?;
        if moves >= cap && improving_move_exists(instance, state, cfg, policy)? {
            return Err(Error::NonConvergence { moves, recent });
        }
    }
    Ok(moves)
}

pub fn nash_equilibrium(
    instance: &Instance,
    state: &mut GlobalState,
    cfg: &PolicyConfig,
    policy: &MigrationPolicy,
) -> Result<usize> {
    nash_equilibrium_with(instance, state, cfg, policy, |_, _| Ok(()))
}

fn improving_move_exists(
    instance: &Instance,
    state: &GlobalState,
    cfg: &PolicyConfig,
    policy: &MigrationPolicy,
) -> Result<bool> {
    Ok(equilibrium_gap(instance, state, cfg, policy.threshold)? > 0.0)
}

/// `max_{j,d} offer(j, d) - threshold * φ(j)`; non-positive at an equilibrium.
pub fn equilibrium_gap(instance: &Instance, state: &GlobalState, cfg: &PolicyConfig, threshold: f64) -> Result<f64> {
    let mut gap = f64::NEG_INFINITY;
    for job in state.active_jobs() {
        let phi = current_utility(instance, state, cfg, job)?;
        if let Some((_, value)) = best_alternative(instance, state, cfg, job)? {
            gap = gap.max(value - threshold * phi);
        }
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Job, Mode};
    use crate::power::PowerFunction;
    use alloc::string::ToString;
    use alloc::vec;
    use alloc::vec::Vec;

    fn job(i: usize, weight: u64, rates: Vec<f64>) -> Job {
        Job { id: alloc::format!("j{i}"), release: 0.0, size: 1.0, weight, rates }
    }

    fn flow_cfg(k: u32) -> PolicyConfig {
        PolicyConfig::analysis(k, Mode::Flow).unwrap()
    }

    /// Fills machines with filler jobs of the given total weights; returns the
    /// instance with `extra` appended after the fillers.
    fn loaded(loads: &[u64], extra: Vec<Job>) -> (Instance, GlobalState) {
        let m = loads.len();
        let mut jobs: Vec<Job> = loads
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let mut rates = vec![0.0; m];
                rates[i] = 1.0;
                job(i, w.max(1), rates)
            })
            .collect();
        jobs.extend(extra);
        let inst = Instance::flow(m, jobs);
        let mut state = GlobalState::new(m, inst.job_count());
        for (i, &w) in loads.iter().enumerate() {
            if w > 0 {
                state.place(JobId(i), w, i).unwrap();
            }
        }
        (inst, state)
    }

    #[test]
    fn offers() {
        let (inst, state) = loaded(&[0, 3], vec![job(2, 1, vec![5.0, 2.0])]);
        let cfg = flow_cfg(1);
        assert_eq!(offer(&inst, &state, &cfg, JobId(2), 0).unwrap(), 5.0);
        assert_eq!(offer(&inst, &state, &cfg, JobId(2), 1).unwrap(), 0.5);
        let (inst, state) = loaded(&[0, 0], vec![job(2, 1, vec![0.0, 2.0])]);
        assert_eq!(offer(&inst, &state, &cfg, JobId(2), 0).unwrap(), 0.0);
    }

    #[test]
    fn arrival_prefers_light_machine() {
        let (inst, mut state) = loaded(&[0, 10], vec![job(2, 1, vec![1.0, 1.0])]);
        assert_eq!(assign_arrival(&inst, &mut state, &flow_cfg(1), JobId(2)).unwrap(), 0);
        assert_eq!(state.machine_of(JobId(2)), Some(0));
    }

    #[test]
    fn arrival_ties_go_to_lowest_index() {
        let inst = Instance::flow(3, vec![job(0, 2, vec![1.0, 1.0, 1.0])]);
        let mut state = GlobalState::new(3, 1);
        assert_eq!(assign_arrival(&inst, &mut state, &flow_cfg(1), JobId(0)).unwrap(), 0);
    }

    #[test]
    fn energy_arrival_tie() {
        // Offers g(1)*1/1 = 1 and g(4)*2/4 = 1.
        let sq = PowerFunction::polynomial(2.0).unwrap();
        let jobs = vec![job(0, 3, vec![0.0, 1.0]), job(1, 1, vec![1.0, 2.0])];
        let inst = Instance::energy(jobs, vec![sq.clone(), sq]);
        let cfg = PolicyConfig::analysis(1, Mode::Energy).unwrap();
        let mut state = GlobalState::new(2, 2);
        state.place(JobId(0), 3, 1).unwrap();
        assert_eq!(offer(&inst, &state, &cfg, JobId(1), 0).unwrap(), 1.0);
        assert_eq!(offer(&inst, &state, &cfg, JobId(1), 1).unwrap(), 1.0);
        assert_eq!(assign_arrival(&inst, &mut state, &cfg, JobId(1)).unwrap(), 0);
    }

    #[test]
    fn infeasible_arrival_rejected() {
        let inst = Instance::flow(2, vec![job(0, 1, vec![0.0, 0.0])]);
        let mut state = GlobalState::new(2, 1);
        assert_eq!(assign_arrival(&inst, &mut state, &flow_cfg(1), JobId(0)), Err(Error::Infeasible(JobId(0))));
    }

    #[test]
    fn step_moves_to_empty_machine() {
        let inst = Instance::flow(2, vec![job(0, 1, vec![1.0, 1.0]), job(1, 1, vec![1.0, 1.0])]);
        let mut state = GlobalState::new(2, 2);
        state.place(JobId(0), 1, 0).unwrap();
        state.place(JobId(1), 1, 0).unwrap();
        let cfg = flow_cfg(1);
        let mv = sbr_step(&inst, &mut state, &cfg, &MigrationPolicy::pure()).unwrap().unwrap();
        assert_eq!(mv, Move { job: JobId(1), from: 0, to: 1, utility_before: 0.5, utility_after: 1.0 });
        assert_eq!(sbr_step(&inst, &mut state, &cfg, &MigrationPolicy::pure()).unwrap(), None);
    }

    #[test]
    fn equilibrium_hand_trace() {
        let inst = Instance::flow(2, vec![job(0, 1, vec![2.0, 2.0]), job(1, 1, vec![2.0, 2.0])]);
        let mut state = GlobalState::new(2, 2);
        state.place(JobId(0), 1, 0).unwrap();
        state.place(JobId(1), 1, 0).unwrap();
        let cfg = flow_cfg(1);
        let policy = MigrationPolicy::pure();
        assert_eq!(nash_equilibrium(&inst, &mut state, &cfg, &policy).unwrap(), 1);
        assert_eq!(state.queue(0).len(), 1);
        assert_eq!(state.queue(1).len(), 1);
        assert_eq!(nash_equilibrium(&inst, &mut state, &cfg, &policy).unwrap(), 0);
        assert!(equilibrium_gap(&inst, &state, &cfg, 1.0).unwrap() <= 0.0);
    }

    #[test]
    fn single_machine_never_moves() {
        let inst = Instance::flow(1, vec![job(0, 1, vec![1.0]), job(1, 4, vec![3.0])]);
        let mut state = GlobalState::new(1, 2);
        state.place(JobId(0), 1, 0).unwrap();
        state.place(JobId(1), 4, 0).unwrap();
        assert_eq!(nash_equilibrium(&inst, &mut state, &flow_cfg(2), &MigrationPolicy::pure()).unwrap(), 0);
    }

    #[test]
    fn move_raises_mover_and_never_lowers_others() {
        let rates = |a: f64, b: f64, c: f64| vec![a, b, c];
        let jobs = vec![
            job(0, 2, rates(1.0, 0.3, 0.5)),
            job(1, 1, rates(0.8, 1.2, 0.1)),
            job(2, 3, rates(1.5, 0.4, 0.9)),
            job(3, 1, rates(0.2, 2.0, 1.0)),
            job(4, 2, rates(1.0, 1.0, 1.0)),
        ];
        let inst = Instance::flow(3, jobs);
        let cfg = flow_cfg(2);
        let mut state = GlobalState::new(3, 5);
        for j in 0..5 {
            state.place(JobId(j), inst.jobs[j].weight, 0).unwrap();
        }
        let policy = MigrationPolicy::pure();
        loop {
            let before: Vec<f64> = (0..5).map(|j| current_utility(&inst, &state, &cfg, JobId(j)).unwrap()).collect();
            let Some(mv) = sbr_step(&inst, &mut state, &cfg, &policy).unwrap() else { break };
            assert!(mv.utility_after > mv.utility_before);
            for j in 0..5 {
                let now = current_utility(&inst, &state, &cfg, JobId(j)).unwrap();
                assert!(now >= before[j], "job {j} lost utility");
            }
        }
        assert!(equilibrium_gap(&inst, &state, &cfg, 1.0).unwrap() <= 0.0);
    }

    #[test]
    fn cap_reports_non_convergence() {
        // Three unit jobs stacked on machine 0 of three identical machines need two moves.
        let jobs = (0..3).map(|i| job(i, 1, vec![1.0, 1.0, 1.0])).collect();
        let inst3 = Instance::flow(3, jobs);
        let mut state3 = GlobalState::new(3, 3);
        for j in 0..3 {
            state3.place(JobId(j), 1, 0).unwrap();
        }
        let policy = MigrationPolicy { iteration_cap: Some(1), ..MigrationPolicy::pure() };
        let err = nash_equilibrium(&inst3, &mut state3, &flow_cfg(1), &policy).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { moves: 1, .. }));
        assert!(err.to_string().contains("#"));
    }

    #[test]
    fn migration_bound_values() {
        let mut jobs: Vec<Job> = (0..8).map(|i| job(i, 1, vec![1.0])).collect();
        jobs[0].weight = 1024;
        let inst = Instance::flow(1, jobs);
        // theta = 2: log2 1024 = 10, log2 8 = 3.
        assert_eq!(MigrationPolicy::bounded(1).migration_bound(&inst), Some(13));
        assert_eq!(MigrationPolicy::pure().migration_bound(&inst), None);
        assert_eq!(MigrationPolicy::bounded(1).default_cap(&inst), 8 * 14);
        assert!(MigrationPolicy::with_threshold(0.9).is_err());
    }
}
