//! Exact event-driven execution of the selfish-migration schedule.
//!
//! Between consecutive events every queue, and hence every rate, is constant,
//! so each job's residual work falls linearly and the next completion is the
//! root of a linear equation. The run is recorded as an [`EventLog`]: events
//! (arrivals, completions, migrations) interleaved with one [`IntervalRecord`]
//! per maximal constant-rate interval, covering `[min r_j, max C_j]` without
//! gaps.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::game::{self, GlobalState, MigrationPolicy};
use crate::instance::{Instance, JobId, Mode};
use crate::math::scale;
use crate::queue::{rate_assignment, utility_at, PolicyConfig};

/// Residuals at or below this fraction of the job size count as done.
const COMPLETION_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunSettings {
    pub cfg: PolicyConfig,
    pub policy: MigrationPolicy,
    /// Multiplies every job's processing speed, independently of `eta`.
    pub speed_factor: f64,
}

impl RunSettings {
    /// Analysis preset: `eta = 1 + 3/k`, threshold `1 + 1/k`, no extra speed.
    pub fn analysis(k: u32, mode: Mode) -> Result<Self> {
        Ok(RunSettings {
            cfg: PolicyConfig::analysis(k, mode)?,
            policy: MigrationPolicy::bounded(k),
            speed_factor: 1.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum EventKind {
    Arrival { job: JobId, machine: usize },
    Completion { job: JobId, machine: usize },
    Migration { job: JobId, from: usize, to: usize, utility_before: f64, utility_after: f64 },
}

impl EventKind {
    pub fn job(&self) -> JobId {
        match *self {
            EventKind::Arrival { job, .. } | EventKind::Completion { job, .. } | EventKind::Migration { job, .. } => {
                job
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Event {
    pub time: f64,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MachineSnapshot {
    pub machine: usize,
    /// Virtual queue, head first.
    pub order: Vec<JobId>,
    pub total_weight: u64,
    /// `S(i, t) = Σ ν_j`, before the speed factor.
    pub speed: f64,
    /// `f_i(S(i, t))`, energy mode only.
    pub power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JobSnapshot {
    pub job: JobId,
    pub machine: usize,
    pub rank: usize,
    pub prefix_weight: u64,
    /// Assigned processing power `ν_j`.
    pub nu: f64,
    /// Processing speed `speed_factor * ℓ_ij * ν_j`.
    pub speed: f64,
    /// `φ(j, t)`.
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntervalRecord {
    pub start: f64,
    pub end: f64,
    pub machines: Vec<MachineSnapshot>,
    /// Active jobs in ascending id order.
    pub jobs: Vec<JobSnapshot>,
}

impl IntervalRecord {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn job(&self, job: JobId) -> Option<&JobSnapshot> {
        self.jobs.binary_search_by_key(&job, |s| s.job).ok().map(|i| &self.jobs[i])
    }

    /// `Σ_i W(i, t)`.
    pub fn alive_weight(&self) -> u64 {
        self.machines.iter().map(|m| m.total_weight).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "lowercase"))]
pub enum LogRecord {
    Event(Event),
    Interval(IntervalRecord),
}

/// Chronological record of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

impl EventLog {
    pub fn intervals(&self) -> impl Iterator<Item = &IntervalRecord> + '_ {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Interval(iv) => Some(iv),
            LogRecord::Event(_) => None,
        })
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> + '_ {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Event(e) => Some(e),
            LogRecord::Interval(_) => None,
        })
    }

    /// Completion time of every job, from the completion events.
    pub fn completions(&self, job_count: usize) -> Vec<Option<f64>> {
        let mut out = vec![None; job_count];
        for e in self.events() {
            if let EventKind::Completion { job, .. } = e.kind {
                if let Some(slot) = out.get_mut(job.0) {
                    *slot = Some(e.time);
                }
            }
        }
        out
    }
}

/// A job's utility went down between two samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityDrop {
    pub job: JobId,
    pub time: f64,
    pub previous: f64,
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult {
    pub settings: RunSettings,
    pub completion: Vec<f64>,
    pub flow_time: Vec<f64>,
    pub weighted_flow: f64,
    /// `∫ Σ_i f_i(S(i, t)) dt`, energy mode only.
    pub energy: Option<f64>,
    pub migrations: Vec<u32>,
    pub utility_drops: Vec<UtilityDrop>,
    pub log: EventLog,
}

impl ScheduleResult {
    pub fn total_migrations(&self) -> u64 {
        self.migrations.iter().map(|&m| m as u64).sum()
    }

    /// [`replay_check`] plus agreement of the reported totals with the log.
    pub fn replay_check(&self, instance: &Instance) -> Vec<ReplayViolation> {
        let mut out = replay_check(instance, &self.settings, &self.log);
        let tol = 1e-9;
        let completions = self.log.completions(instance.job_count());
        for (j, c) in completions.iter().enumerate() {
            if let Some(c) = c {
                if *c != self.completion[j] {
                    out.push(ReplayViolation::ReportedTotal {
                        what: "completion time",
                        reported: self.completion[j],
                        replayed: *c,
                    });
                }
            }
        }
        let replayed: f64 = instance
            .jobs
            .iter()
            .zip(&completions)
            .map(|(job, c)| job.weight as f64 * (c.unwrap_or(job.release) - job.release))
            .sum();
        if (replayed - self.weighted_flow).abs() > tol * scale(replayed, self.weighted_flow) {
            out.push(ReplayViolation::ReportedTotal {
                what: "weighted flow-time",
                reported: self.weighted_flow,
                replayed,
            });
        }
        if let Some(energy) = self.energy {
            let replayed: f64 =
                self.log.intervals().map(|iv| iv.len() * iv.machines.iter().filter_map(|m| m.power).sum::<f64>()).sum();
            if (replayed - energy).abs() > tol * scale(replayed, energy) {
                out.push(ReplayViolation::ReportedTotal { what: "energy", reported: energy, replayed });
            }
        }
        out
    }
}

/// Earliest finishing job among `(job, residual work, speed)` triples, as
/// `(time from now, job)`. Jobs at zero speed are skipped; ties go to the
/// lower id.
pub fn next_completion(jobs: &[(JobId, f64, f64)]) -> Result<Option<(f64, JobId)>> {
    let mut best: Option<(f64, JobId)> = None;
    for &(job, residual, speed) in jobs {
        if !(speed > 0.0) {
            continue;
        }
        let dt = residual / speed;
        let better = match best {
            None => true,
            Some((b, bj)) => dt < b || (dt == b && job < bj),
        };
        if better {
            best = Some((dt, job));
        }
    }
    if best.is_none() && !jobs.is_empty() {
        return Err(Error::Stalled { time: f64::NAN });
    }
    Ok(best)
}

struct Runner<'a> {
    instance: &'a Instance,
    settings: RunSettings,
    state: GlobalState,
    residual: Vec<f64>,
    last_utility: Vec<Option<f64>>,
    migrations: Vec<u32>,
    utility_drops: Vec<UtilityDrop>,
    records: Vec<LogRecord>,
}

impl Runner<'_> {
    fn utility(&self, job: JobId) -> Result<f64> {
        game::current_utility(self.instance, &self.state, &self.settings.cfg, job)
    }

    fn sample_utilities(&mut self, time: f64) -> Result<()> {
        let active: Vec<JobId> = self.state.active_jobs().collect();
        for job in active {
            let current = self.utility(job)?;
            if let Some(previous) = self.last_utility[job.0] {
                if current < previous {
                    self.utility_drops.push(UtilityDrop { job, time, previous, current });
                }
            }
            self.last_utility[job.0] = Some(current);
        }
        Ok(())
    }

    fn push_event(&mut self, time: f64, kind: EventKind) {
        self.records.push(LogRecord::Event(Event { time, kind }));
    }

    fn settle(&mut self, time: f64) -> Result<()> {
        let instance = self.instance;
        let cfg = self.settings.cfg;
        let policy = self.settings.policy;
        let mut moves = Vec::new();
        let mut state = core::mem::replace(&mut self.state, GlobalState::new(0, 0));
        let outcome = game::nash_equilibrium_with(instance, &mut state, &cfg, &policy, |mv, s| {
            moves.push((*mv, s.clone()));
            Ok(())
        });
        // Replay the snapshots so utility sampling sees every intermediate state.
        for (mv, snapshot) in moves {
            self.state = snapshot;
            self.migrations[mv.job.0] += 1;
            self.push_event(
                time,
                EventKind::Migration {
                    job: mv.job,
                    from: mv.from,
                    to: mv.to,
                    utility_before: mv.utility_before,
                    utility_after: mv.utility_after,
                },
            );
            self.sample_utilities(time)?;
        }
        self.state = state;
        outcome.map(|_| ())
    }

    fn snapshot(&self, start: f64, end: f64) -> Result<(IntervalRecord, Vec<(JobId, f64)>)> {
        let instance = self.instance;
        let cfg = &self.settings.cfg;
        let mut machines = Vec::with_capacity(instance.machine_count);
        let mut jobs = Vec::with_capacity(self.state.active_count());
        for queue in self.state.queues() {
            let i = queue.machine();
            let pf = instance.power(i);
            if queue.is_empty() {
                let power = match cfg.mode {
                    Mode::Energy => Some(0.0),
                    Mode::Flow => None,
                };
                machines.push(MachineSnapshot { machine: i, order: Vec::new(), total_weight: 0, speed: 0.0, power });
                continue;
            }
            let nus = rate_assignment(queue, cfg, pf)?;
            let speed: f64 = nus.iter().sum();
            let power = match (cfg.mode, pf) {
                (Mode::Energy, Some(pf)) => Some(pf.eval_f(speed)?),
                (Mode::Energy, None) => return Err(Error::MissingPowerFunctions),
                (Mode::Flow, _) => None,
            };
            for (pos, (entry, &nu)) in queue.entries().iter().zip(&nus).enumerate() {
                let rate = instance.rate(i, entry.job);
                jobs.push(JobSnapshot {
                    job: entry.job,
                    machine: i,
                    rank: pos + 1,
                    prefix_weight: entry.prefix_weight,
                    nu,
                    speed: self.settings.speed_factor * rate * nu,
                    utility: utility_at(cfg.mode, rate, entry.load(), pf)?,
                });
            }
            machines.push(MachineSnapshot {
                machine: i,
                order: queue.entries().iter().map(|e| e.job).collect(),
                total_weight: queue.total_weight(),
                speed,
                power,
            });
        }
        jobs.sort_by_key(|s| s.job);
        let speeds = jobs.iter().map(|s| (s.job, s.speed)).collect();
        Ok((IntervalRecord { start, end, machines, jobs }, speeds))
    }
}

/// Simulates the instance to completion.
pub fn run(instance: &Instance, settings: &RunSettings) -> Result<ScheduleResult> {
    instance.ensure_valid()?;
    let cfg = settings.cfg;
    if cfg.mode != instance.mode {
        return Err(Error::Config(format!("policy mode {} does not match instance mode {}", cfg.mode, instance.mode)));
    }
    if !(settings.speed_factor >= 1.0 && settings.speed_factor.is_finite()) {
        return Err(Error::Config(format!("speed factor {} must be >= 1", settings.speed_factor)));
    }
    if !(settings.policy.threshold >= 1.0) {
        return Err(Error::Config(format!("threshold {} must be >= 1", settings.policy.threshold)));
    }
    if !(cfg.eta > 0.0) {
        return Err(Error::Config(format!("eta {} must be positive", cfg.eta)));
    }

    let n = instance.job_count();
    let mut arrivals: Vec<JobId> = instance.job_ids().collect();
    arrivals.sort_by(|a, b| instance.job(*a).release.total_cmp(&instance.job(*b).release).then(a.cmp(b)));

    let mut runner = Runner {
        instance,
        settings: *settings,
        state: GlobalState::new(instance.machine_count, n),
        residual: instance.jobs.iter().map(|j| j.size).collect(),
        last_utility: vec![None; n],
        migrations: vec![0; n],
        utility_drops: Vec::new(),
        records: Vec::new(),
    };
    let mut completion = vec![f64::NAN; n];
    let mut next_arrival = 0usize;
    let mut finishing: Vec<JobId> = Vec::new();
    let mut t = arrivals.first().map(|j| instance.job(*j).release).unwrap_or(0.0);

    loop {
        runner.state.clock = t;
        for job in finishing.drain(..) {
            let machine = runner.state.evict(job)?;
            completion[job.0] = t;
            runner.push_event(t, EventKind::Completion { job, machine });
            runner.sample_utilities(t)?;
        }
        while next_arrival < n && instance.job(arrivals[next_arrival]).release <= t {
            let job = arrivals[next_arrival];
            next_arrival += 1;
            let machine = game::assign_arrival(instance, &mut runner.state, &cfg, job)?;
            runner.push_event(t, EventKind::Arrival { job, machine });
            runner.sample_utilities(t)?;
        }
        runner.settle(t)?;

        let pending = arrivals.get(next_arrival).map(|j| instance.job(*j).release);
        if runner.state.active_count() == 0 {
            match pending {
                None => break,
                Some(ta) => {
                    let (iv, _) = runner.snapshot(t, ta)?;
                    runner.records.push(LogRecord::Interval(iv));
                    t = ta;
                    continue;
                }
            }
        }

        let (mut iv, speeds) = runner.snapshot(t, t)?;
        let triples: Vec<(JobId, f64, f64)> = speeds.iter().map(|&(j, q)| (j, runner.residual[j.0], q)).collect();
        let (dt, _) =
            next_completion(&triples).map_err(|_| Error::Stalled { time: t })?.ok_or(Error::Stalled { time: t })?;
        let t_done = t + dt;
        let t_next = match pending {
            Some(ta) if ta < t_done => ta,
            _ => t_done,
        };
        let len = t_next - t;
        for &(job, q) in &speeds {
            let finish = t + runner.residual[job.0] / q;
            let left = runner.residual[job.0] - q * len;
            if finish <= t_next || left <= COMPLETION_SNAP * instance.job(job).size {
                runner.residual[job.0] = 0.0;
                finishing.push(job);
            } else {
                runner.residual[job.0] = left;
            }
        }
        if len > 0.0 {
            iv.end = t_next;
            runner.records.push(LogRecord::Interval(iv));
        }
        t = t_next;
    }

    let flow_time: Vec<f64> = instance.jobs.iter().zip(&completion).map(|(j, &c)| c - j.release).collect();
    let weighted_flow = instance.jobs.iter().zip(&flow_time).map(|(j, &f)| j.weight as f64 * f).sum();
    let log = EventLog { records: runner.records };
    let energy = match cfg.mode {
        Mode::Energy => {
            Some(log.intervals().map(|iv| iv.len() * iv.machines.iter().filter_map(|m| m.power).sum::<f64>()).sum())
        }
        Mode::Flow => None,
    };
    Ok(ScheduleResult {
        settings: *settings,
        completion,
        flow_time,
        weighted_flow,
        energy,
        migrations: runner.migrations,
        utility_drops: runner.utility_drops,
        log,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayViolation {
    CoverageGap { interval: usize, end: f64, next_start: f64 },
    CoverageBounds { expected: (f64, f64), found: (f64, f64) },
    MissingArrival(JobId),
    MissingCompletion(JobId),
    ArrivalTime { job: JobId, time: f64, release: f64 },
    QueueMismatch { interval: usize, machine: usize },
    RateMismatch { interval: usize, job: JobId, logged: f64, expected: f64 },
    SpeedMismatch { interval: usize, job: JobId, logged: f64, expected: f64 },
    Conservation { interval: usize, machine: usize, sum: f64, expected: f64 },
    PowerMismatch { interval: usize, machine: usize, logged: f64, expected: f64 },
    Work { job: JobId, integrated: f64, size: f64 },
    FlowAccounting { weighted_flow: f64, integrated_weight: f64 },
    ReportedTotal { what: &'static str, reported: f64, replayed: f64 },
    Malformed(alloc::string::String),
}

impl fmt::Display for ReplayViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ReplayViolation::*;
        match self {
            CoverageGap { interval, end, next_start } => {
                write!(f, "gap after interval {interval}: ends {end}, next starts {next_start}")
            }
            CoverageBounds { expected, found } => {
                write!(f, "log covers {found:?}, expected {expected:?}")
            }
            MissingArrival(j) => write!(f, "job {j} never arrives"),
            MissingCompletion(j) => write!(f, "job {j} never completes"),
            ArrivalTime { job, time, release } => {
                write!(f, "job {job} arrives at {time}, released at {release}")
            }
            QueueMismatch { interval, machine } => {
                write!(f, "interval {interval}: queue of machine {machine} inconsistent")
            }
            RateMismatch { interval, job, logged, expected } => {
                write!(f, "interval {interval}: job {job} has rate {logged}, recomputed {expected}")
            }
            SpeedMismatch { interval, job, logged, expected } => {
                write!(f, "interval {interval}: job {job} has speed {logged}, recomputed {expected}")
            }
            Conservation { interval, machine, sum, expected } => {
                write!(f, "interval {interval}: rates on machine {machine} sum to {sum}, expected {expected}")
            }
            PowerMismatch { interval, machine, logged, expected } => {
                write!(f, "interval {interval}: machine {machine} power {logged}, recomputed {expected}")
            }
            Work { job, integrated, size } => {
                write!(f, "job {job} received {integrated} work for size {size}")
            }
            FlowAccounting { weighted_flow, integrated_weight } => {
                write!(f, "weighted flow-time {weighted_flow} != integrated alive weight {integrated_weight}")
            }
            ReportedTotal { what, reported, replayed } => {
                write!(f, "reported {what} {reported}, replayed {replayed}")
            }
            Malformed(msg) => f.write_str(msg),
        }
    }
}

fn rel_differs(a: f64, b: f64, tol: f64) -> bool {
    !((a - b).abs() <= tol * scale(a, b))
}

/// Re-derives every rate and integral from the log and reports any record that
/// deviates by more than `1e-9` relative.
pub fn replay_check(instance: &Instance, settings: &RunSettings, log: &EventLog) -> Vec<ReplayViolation> {
    let tol = 1e-9;
    let n = instance.job_count();
    let cfg = &settings.cfg;
    let mut out = Vec::new();

    let mut arrival = vec![None; n];
    for e in log.events() {
        let j = e.kind.job();
        if j.0 >= n {
            out.push(ReplayViolation::Malformed(format!("event for unknown job {j}")));
            return out;
        }
        if let EventKind::Arrival { job, .. } = e.kind {
            arrival[job.0] = Some(e.time);
        }
    }
    let completions = log.completions(n);
    for (j, job) in instance.jobs.iter().enumerate() {
        match arrival[j] {
            None => out.push(ReplayViolation::MissingArrival(JobId(j))),
            Some(t) if t != job.release => {
                out.push(ReplayViolation::ArrivalTime { job: JobId(j), time: t, release: job.release })
            }
            _ => {}
        }
        if completions[j].is_none() {
            out.push(ReplayViolation::MissingCompletion(JobId(j)));
        }
    }

    let intervals: Vec<&IntervalRecord> = log.intervals().collect();
    for (idx, pair) in intervals.windows(2).enumerate() {
        if pair[0].end != pair[1].start {
            out.push(ReplayViolation::CoverageGap { interval: idx, end: pair[0].end, next_start: pair[1].start });
        }
    }
    if n > 0 {
        let first = instance.jobs.iter().map(|j| j.release).fold(f64::INFINITY, f64::min);
        let last = completions.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let found = (intervals.first().map_or(f64::NAN, |iv| iv.start), intervals.last().map_or(f64::NAN, |iv| iv.end));
        if found != (first, last) {
            out.push(ReplayViolation::CoverageBounds { expected: (first, last), found });
        }
    }

    let mut work = vec![0.0f64; n];
    let mut integrated_weight = 0.0;
    for (idx, iv) in intervals.iter().enumerate() {
        integrated_weight += iv.len() * iv.alive_weight() as f64;
        if let Err(v) = replay_interval(instance, settings, idx, iv, &mut work, &mut out) {
            out.push(v);
        }
    }

    for (j, job) in instance.jobs.iter().enumerate() {
        if rel_differs(work[j], job.size, tol) {
            out.push(ReplayViolation::Work { job: JobId(j), integrated: work[j], size: job.size });
        }
    }
    let weighted_flow: f64 = instance
        .jobs
        .iter()
        .zip(&completions)
        .map(|(job, c)| job.weight as f64 * (c.unwrap_or(job.release) - job.release))
        .sum();
    if rel_differs(weighted_flow, integrated_weight, tol) {
        out.push(ReplayViolation::FlowAccounting { weighted_flow, integrated_weight });
    }
    let _ = cfg;
    out
}

fn replay_interval(
    instance: &Instance,
    settings: &RunSettings,
    idx: usize,
    iv: &IntervalRecord,
    work: &mut [f64],
    out: &mut Vec<ReplayViolation>,
) -> core::result::Result<(), ReplayViolation> {
    let tol = 1e-9;
    let cfg = &settings.cfg;
    let n = instance.job_count();
    if iv.machines.len() != instance.machine_count {
        return Err(ReplayViolation::Malformed(format!("interval {idx} lists {} machines", iv.machines.len())));
    }
    for ms in &iv.machines {
        let i = ms.machine;
        let mut queue = crate::queue::QueueState::new(i);
        for &job in &ms.order {
            if job.0 >= n || queue.enqueue_tail(job, instance.job(job).weight).is_err() {
                return Err(ReplayViolation::QueueMismatch { interval: idx, machine: i });
            }
        }
        if queue.total_weight() != ms.total_weight {
            out.push(ReplayViolation::QueueMismatch { interval: idx, machine: i });
        }
        if queue.is_empty() {
            continue;
        }
        let pf = instance.power(i);
        let Ok(expected) = rate_assignment(&queue, cfg, pf) else {
            return Err(ReplayViolation::QueueMismatch { interval: idx, machine: i });
        };
        let mut sum = 0.0;
        for (entry, &nu_expected) in queue.entries().iter().zip(&expected) {
            let Some(snap) = iv.job(entry.job) else {
                return Err(ReplayViolation::QueueMismatch { interval: idx, machine: i });
            };
            if snap.machine != i || snap.prefix_weight != entry.prefix_weight {
                out.push(ReplayViolation::QueueMismatch { interval: idx, machine: i });
            }
            if rel_differs(snap.nu, nu_expected, tol) {
                out.push(ReplayViolation::RateMismatch {
                    interval: idx,
                    job: entry.job,
                    logged: snap.nu,
                    expected: nu_expected,
                });
            }
            let speed_expected = settings.speed_factor * instance.rate(i, entry.job) * snap.nu;
            if rel_differs(snap.speed, speed_expected, tol) {
                out.push(ReplayViolation::SpeedMismatch {
                    interval: idx,
                    job: entry.job,
                    logged: snap.speed,
                    expected: speed_expected,
                });
            }
            sum += snap.nu;
            work[entry.job.0] += speed_expected * iv.len();
        }
        let total = match cfg.mode {
            Mode::Flow => cfg.eta,
            Mode::Energy => match pf.map(|p| p.eval_g(queue.total_weight() as f64)) {
                Some(Ok(g)) => g,
                _ => return Err(ReplayViolation::Malformed("missing power function".into())),
            },
        };
        if rel_differs(sum, total, tol) {
            out.push(ReplayViolation::Conservation { interval: idx, machine: i, sum, expected: total });
        }
        if let (Mode::Energy, Some(pf), Some(power)) = (cfg.mode, pf, ms.power) {
            if let Ok(expected) = pf.eval_f(ms.speed) {
                if rel_differs(power, expected, tol) {
                    out.push(ReplayViolation::PowerMismatch { interval: idx, machine: i, logged: power, expected });
                }
            }
        }
    }
    let queued: usize = iv.machines.iter().map(|m| m.order.len()).sum();
    if queued != iv.jobs.len() {
        return Err(ReplayViolation::Malformed(format!(
            "interval {idx} lists {} jobs but queues hold {queued}",
            iv.jobs.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Job;
    use crate::power::PowerFunction;
    use alloc::string::ToString;
    use approx::assert_relative_eq;

    fn job(i: usize, release: f64, size: f64, weight: u64, rates: Vec<f64>) -> Job {
        Job { id: format!("j{i}"), release, size, weight, rates }
    }

    fn flow_settings(k: u32, eta: f64, speed_factor: f64) -> RunSettings {
        RunSettings { cfg: PolicyConfig { k, eta, mode: Mode::Flow }, policy: MigrationPolicy::pure(), speed_factor }
    }

    #[test]
    fn single_job_closed_form() {
        let inst = Instance::flow(1, vec![job(0, 0.5, 2.0, 3, vec![1.0])]);
        let res = run(&inst, &flow_settings(1, 1.5, 1.0)).unwrap();
        assert_relative_eq!(res.completion[0], 0.5 + 2.0 / 1.5, max_relative = 1e-15);
        assert_relative_eq!(res.weighted_flow, 3.0 * 2.0 / 1.5, max_relative = 1e-15);
        assert!(res.replay_check(&inst).is_empty());
    }

    #[test]
    fn two_jobs_split_across_identical_machines() {
        let jobs = vec![job(0, 0.0, 1.0, 1, vec![1.0, 1.0]), job(1, 0.0, 1.0, 1, vec![1.0, 1.0])];
        let inst = Instance::flow(2, jobs);
        let settings = flow_settings(1, 1.25, 2.0);
        let res = run(&inst, &settings).unwrap();
        let expected = 1.0 / (2.0 * 1.25);
        assert_eq!(res.completion, vec![expected, expected]);
        assert_eq!(res.total_migrations(), 0);
        let iv = res.log.intervals().next().unwrap();
        assert_eq!(iv.machines[0].order, vec![JobId(0)]);
        assert_eq!(iv.machines[1].order, vec![JobId(1)]);
    }

    #[test]
    fn energy_single_job() {
        let sq = PowerFunction::polynomial(2.0).unwrap();
        let inst = Instance::energy(vec![job(0, 0.0, 2.0, 4, vec![1.0])], vec![sq]);
        let settings = RunSettings::analysis(1, Mode::Energy).unwrap();
        let res = run(&inst, &settings).unwrap();
        assert_relative_eq!(res.completion[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(res.energy.unwrap(), 4.0, max_relative = 1e-15);
        assert_relative_eq!(res.weighted_flow, 4.0, max_relative = 1e-15);
        let iv = res.log.intervals().next().unwrap();
        assert_eq!(iv.machines[0].speed, 2.0);
    }

    #[test]
    fn next_completion_rules() {
        assert_eq!(next_completion(&[(JobId(0), 1.0, 1.0), (JobId(1), 3.0, 1.0)]).unwrap(), Some((1.0, JobId(0))));
        assert_eq!(next_completion(&[(JobId(4), 2.0, 1.0), (JobId(2), 1.0, 0.5)]).unwrap(), Some((2.0, JobId(2))));
        assert_eq!(next_completion(&[(JobId(0), 1.0, 0.0), (JobId(1), 3.0, 2.0)]).unwrap(), Some((1.5, JobId(1))));
        assert!(next_completion(&[(JobId(0), 1.0, 0.0)]).is_err());
        assert_eq!(next_completion(&[]).unwrap(), None);
    }

    #[test]
    fn idle_gap_is_logged() {
        let inst = Instance::flow(1, vec![job(0, 0.0, 1.0, 1, vec![1.0]), job(1, 5.0, 1.0, 1, vec![1.0])]);
        let res = run(&inst, &flow_settings(1, 2.0, 1.0)).unwrap();
        let ivs: Vec<_> = res.log.intervals().collect();
        assert_eq!(ivs.len(), 3);
        assert_eq!((ivs[1].start, ivs[1].end), (0.5, 5.0));
        assert!(ivs[1].jobs.is_empty());
        assert!(res.replay_check(&inst).is_empty());
    }

    #[test]
    fn completion_precedes_arrival_in_log() {
        let inst = Instance::flow(1, vec![job(0, 0.0, 1.0, 1, vec![1.0]), job(1, 0.5, 1.0, 1, vec![1.0])]);
        let res = run(&inst, &flow_settings(1, 2.0, 1.0)).unwrap();
        let events: Vec<_> = res.log.events().collect();
        assert_eq!(events[1].kind, EventKind::Completion { job: JobId(0), machine: 0 });
        assert_eq!(events[2].kind, EventKind::Arrival { job: JobId(1), machine: 0 });
        assert_eq!(events[1].time, 0.5);
    }

    #[test]
    fn perturbed_rate_is_reported() {
        let jobs = vec![
            job(0, 0.0, 1.0, 2, vec![1.0, 0.5]),
            job(1, 0.1, 2.0, 1, vec![1.0, 0.7]),
            job(2, 0.2, 1.5, 3, vec![0.4, 1.0]),
        ];
        let inst = Instance::flow(2, jobs);
        let res = run(&inst, &flow_settings(2, 2.5, 1.0)).unwrap();
        assert!(res.replay_check(&inst).is_empty());
        let mut log = res.log.clone();
        let target = log
            .records
            .iter_mut()
            .filter_map(|r| match r {
                LogRecord::Interval(iv) if !iv.jobs.is_empty() => Some(iv),
                _ => None,
            })
            .nth(1)
            .unwrap();
        target.jobs[0].nu += 1e-3;
        let violations = replay_check(&inst, &res.settings, &log);
        assert!(violations.iter().any(|v| matches!(v, ReplayViolation::RateMismatch { interval: 1, .. })));
        assert!(violations.iter().any(|v| v.to_string().contains("interval 1")));
    }

    #[test]
    fn truncated_log_is_reported() {
        let jobs = vec![job(0, 0.0, 1.0, 1, vec![1.0]), job(1, 0.0, 3.0, 1, vec![1.0])];
        let inst = Instance::flow(1, jobs);
        let res = run(&inst, &flow_settings(1, 2.0, 1.0)).unwrap();
        let mut log = res.log.clone();
        log.records.truncate(log.records.len() - 2);
        let v = replay_check(&inst, &res.settings, &log);
        assert!(v.iter().any(|v| matches!(v, ReplayViolation::MissingCompletion(JobId(1)))));
        assert!(v.iter().any(|v| matches!(v, ReplayViolation::CoverageBounds { .. })));
    }

    #[test]
    fn mode_mismatch_rejected() {
        let inst = Instance::flow(1, vec![job(0, 0.0, 1.0, 1, vec![1.0])]);
        let settings = RunSettings::analysis(1, Mode::Energy).unwrap();
        assert!(matches!(run(&inst, &settings), Err(Error::Config(_))));
    }

    #[test]
    fn empty_instance_runs() {
        let inst = Instance::flow(2, vec![]);
        let res = run(&inst, &flow_settings(1, 2.0, 1.0)).unwrap();
        assert_eq!(res.weighted_flow, 0.0);
        assert!(res.log.records.is_empty());
        assert!(res.replay_check(&inst).is_empty());
    }
}
