//! Dual-fitting certificate recomputed from an event log.
//!
//! Every quantity is rebuilt from the logged queue snapshots: the
//! instantaneous delays `δ_j`, their integrals `Δ_j`, the dual variables
//! `α_j = Δ_j/(k+2)` and `β_it`, and then every inequality the analysis
//! relies on is evaluated at every event time. Comparisons use
//! `tol * max(1, |lhs|, |rhs|)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::game::MigrationPolicy;
use crate::instance::{Instance, JobId, Mode};
use crate::math::scale;
use crate::queue::utility_at;
use crate::sim::{replay_check, EventKind, EventLog, IntervalRecord, RunSettings};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tolerances {
    /// Relative tolerance for identities and inequalities.
    pub relative: f64,
    /// Allowed growth of a dual-constraint slack from an interval's left to right endpoint.
    pub endpoint: f64,
    /// Allowed excess of an offer over `threshold * φ` at an equilibrium.
    pub equilibrium: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { relative: 1e-9, endpoint: 1e-12, equilibrium: 1e-12 }
    }
}

/// Delays of one job over the intervals in which it is alive.
#[derive(Debug, Clone, PartialEq)]
pub struct JobDelays {
    pub job: JobId,
    /// Index (among interval records) of the first interval the job is alive in.
    pub first_interval: usize,
    /// `δ_j` on each alive interval.
    pub delta: Vec<f64>,
    /// Interval boundaries `t_0 = r_j < t_1 < ... < t_L = C_j`.
    pub times: Vec<f64>,
    /// `Δ¹_j(t_b)` at each boundary.
    pub first: Vec<f64>,
    /// Residual work `p_j(t_b)` from the logged speeds.
    pub residual: Vec<f64>,
    /// `Δ_j`.
    pub total: f64,
}

impl JobDelays {
    /// `Δ²_j(t_b) = Δ_j - Δ¹_j(t_b)`.
    pub fn second(&self, b: usize) -> f64 {
        self.total - self.first[b]
    }

    /// `Δ¹_j(t)` for any `t` in `[r_j, C_j]`.
    pub fn first_at(&self, t: f64) -> f64 {
        let b = self.times.partition_point(|&x| x <= t);
        if b == 0 {
            return 0.0;
        }
        if b >= self.times.len() {
            return self.total;
        }
        self.first[b - 1] + self.delta[b - 1] * (t - self.times[b - 1])
    }

    pub fn second_at(&self, t: f64) -> f64 {
        self.total - self.first_at(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfile {
    pub jobs: Vec<JobDelays>,
    /// `Σ_j δ_j` on each interval.
    pub interval_delay: Vec<f64>,
}

impl DelayProfile {
    pub fn total(&self) -> f64 {
        self.jobs.iter().map(|j| j.total).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    pub alpha: Vec<f64>,
    /// `β_it` per interval (outer) and machine (inner); zero after the last interval.
    pub beta: Vec<Vec<f64>>,
    /// `Σ_i ∫ β_it dt` (flow) or `Σ_i ∫ f_i*(β_it/(1+3ε)) dt` (energy).
    pub beta_cost: f64,
    pub dual_objective: f64,
}

/// Outcome of one family of inequalities. Slacks are `(lhs - rhs) / scale`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckSummary {
    pub name: String,
    pub checked: u64,
    pub violations: u64,
    pub worst_slack: Option<f64>,
    pub worst_at: Option<String>,
    pub passed: bool,
}

struct Tracker {
    summary: CheckSummary,
    tol: f64,
}

impl Tracker {
    fn new(name: &str, tol: f64) -> Self {
        Tracker {
            summary: CheckSummary {
                name: name.into(),
                checked: 0,
                violations: 0,
                worst_slack: None,
                worst_at: None,
                passed: true,
            },
            tol,
        }
    }

    /// Records `lhs <= rhs`.
    fn le(&mut self, lhs: f64, rhs: f64, at: impl FnOnce() -> String) {
        let slack = if lhs.is_nan() || rhs.is_nan() { f64::MAX } else { (lhs - rhs) / scale(lhs, rhs) };
        self.slack(slack, at);
    }

    /// Records `|a - b| <= tol * scale`.
    fn eq(&mut self, a: f64, b: f64, at: impl FnOnce() -> String) {
        let slack = if a.is_nan() || b.is_nan() { f64::MAX } else { (a - b).abs() / scale(a, b) };
        self.slack(slack, at);
    }

    fn slack(&mut self, slack: f64, at: impl FnOnce() -> String) {
        let s = &mut self.summary;
        s.checked += 1;
        if slack > self.tol {
            s.violations += 1;
        }
        if s.worst_slack.is_none_or(|w| slack > w) {
            s.worst_slack = Some(slack);
            s.worst_at = Some(at());
        }
    }

    fn fail(&mut self, at: String) {
        let s = &mut self.summary;
        s.checked += 1;
        s.violations += 1;
        if s.worst_at.is_none() {
            s.worst_at = Some(at);
        }
    }

    fn finish(mut self) -> CheckSummary {
        self.summary.passed = self.summary.violations == 0;
        self.summary
    }
}

fn check_settings(instance: &Instance, settings: &RunSettings) -> Result<()> {
    let cfg = &settings.cfg;
    if cfg.mode != instance.mode {
        return Err(Error::Config(format!("policy mode {} does not match instance mode {}", cfg.mode, instance.mode)));
    }
    if cfg.k < 1 {
        return Err(Error::Config("certificate needs k >= 1".into()));
    }
    if cfg.mode == Mode::Energy && !(settings.speed_factor == 1.0 && cfg.is_analysis_preset()) {
        return Err(Error::Config(format!(
            "energy certificate requires speed factor 1 and eta = 1 + 3/k, got speed factor {} and eta {}",
            settings.speed_factor, cfg.eta
        )));
    }
    Ok(())
}

/// `δ_j` for every job alive in `iv`, keyed by job, plus the interval sum.
fn interval_delays(instance: &Instance, settings: &RunSettings, iv: &IntervalRecord) -> Result<Vec<(JobId, f64)>> {
    let cfg = &settings.cfg;
    let mut out = Vec::with_capacity(iv.jobs.len());
    for ms in &iv.machines {
        if ms.order.is_empty() {
            continue;
        }
        let prefactor = match cfg.mode {
            Mode::Flow => 1.0 / cfg.eta,
            Mode::Energy => {
                let pf = instance.power(ms.machine).ok_or(Error::MissingPowerFunctions)?;
                1.0 / pf.eval_g(ms.total_weight as f64)?
            }
        };
        let mut ahead = 0.0;
        for &job in &ms.order {
            let snap = iv.job(job).ok_or_else(|| Error::LogInconsistent(format!("job {job} queued but not listed")))?;
            let w = instance.job(job).weight as f64;
            let load = snap.prefix_weight as f64 + w;
            out.push((job, prefactor * (load * snap.nu + w * ahead)));
            ahead += snap.nu;
        }
    }
    out.sort_by_key(|e| e.0);
    Ok(out)
}

/// Rebuilds `δ_j`, `Δ¹_j`, `Δ_j` and residual sizes from the log.
pub fn compute_delays(instance: &Instance, settings: &RunSettings, log: &EventLog) -> Result<DelayProfile> {
    instance.ensure_valid()?;
    check_settings(instance, settings)?;
    let n = instance.job_count();
    let intervals: Vec<&IntervalRecord> = log.intervals().collect();

    struct Acc {
        first_interval: Option<usize>,
        last_interval: usize,
        delta: Vec<f64>,
        times: Vec<f64>,
        speeds: Vec<f64>,
        end: f64,
    }
    let mut acc: Vec<Acc> = (0..n)
        .map(|_| Acc {
            first_interval: None,
            last_interval: 0,
            delta: Vec::new(),
            times: Vec::new(),
            speeds: Vec::new(),
            end: 0.0,
        })
        .collect();
    let mut interval_delay = Vec::with_capacity(intervals.len());
    for (idx, iv) in intervals.iter().enumerate() {
        let deltas = interval_delays(instance, settings, iv)?;
        interval_delay.push(deltas.iter().map(|d| d.1).sum());
        for (job, d) in deltas {
            let a = acc
                .get_mut(job.0)
                .ok_or_else(|| Error::LogInconsistent(format!("unknown job {job} in interval {idx}")))?;
            match a.first_interval {
                None => a.first_interval = Some(idx),
                Some(_) if a.last_interval + 1 != idx => {
                    return Err(Error::LogInconsistent(format!(
                        "job {job} is absent between intervals {} and {idx}",
                        a.last_interval
                    )))
                }
                Some(_) => {}
            }
            a.last_interval = idx;
            a.delta.push(d);
            a.times.push(iv.start);
            a.speeds.push(iv.job(job).map_or(0.0, |s| s.speed));
            a.end = iv.end;
        }
    }

    let completions = log.completions(n);
    let mut jobs = Vec::with_capacity(n);
    for (j, a) in acc.into_iter().enumerate() {
        let job = JobId(j);
        let release = instance.job(job).release;
        let completion = completions[j].ok_or(Error::LogInconsistent(format!("job {job} never completes")))?;
        let Some(first_interval) = a.first_interval else {
            return Err(Error::LogInconsistent(format!("job {job} is never alive")));
        };
        if a.times[0] != release || a.end != completion {
            return Err(Error::LogInconsistent(format!(
                "job {job} is alive on [{}, {}] but released at {release} and completed at {completion}",
                a.times[0], a.end
            )));
        }
        let mut times = a.times;
        times.push(a.end);
        let len = a.delta.len();
        let mut first = Vec::with_capacity(len + 1);
        let mut running = 0.0;
        first.push(0.0);
        for b in 0..len {
            running += a.delta[b] * (times[b + 1] - times[b]);
            first.push(running);
        }
        let mut residual = vec![0.0; len + 1];
        for b in (0..len).rev() {
            residual[b] = residual[b + 1] + a.speeds[b] * (times[b + 1] - times[b]);
        }
        jobs.push(JobDelays { job, first_interval, delta: a.delta, times, first, residual, total: running });
    }
    Ok(DelayProfile { jobs, interval_delay })
}

/// Sets `α_j = Δ_j/(k+2)` and `β_it` (`W/(k+3)` in flow mode,
/// `(1/k) W/g(W)` in energy mode) and evaluates the dual objective.
pub fn build_certificate(
    profile: &DelayProfile,
    instance: &Instance,
    settings: &RunSettings,
    log: &EventLog,
) -> Result<DualCertificate> {
    check_settings(instance, settings)?;
    let k = settings.cfg.k as f64;
    let alpha: Vec<f64> = profile.jobs.iter().map(|j| j.total / (k + 2.0)).collect();
    let mut beta = Vec::new();
    let mut beta_cost = 0.0;
    for iv in log.intervals() {
        let mut row = Vec::with_capacity(iv.machines.len());
        for ms in &iv.machines {
            let w = ms.total_weight as f64;
            let (b, cost) = match settings.cfg.mode {
                Mode::Flow => (w / (k + 3.0), w / (k + 3.0)),
                Mode::Energy => {
                    if ms.total_weight == 0 {
                        (0.0, 0.0)
                    } else {
                        let pf = instance.power(ms.machine).ok_or(Error::MissingPowerFunctions)?;
                        let b = w / (k * pf.eval_g(w)?);
                        (b, pf.eval_conjugate(b / (1.0 + 3.0 / k)))
                    }
                }
            };
            row.push(b);
            beta_cost += cost * iv.len();
        }
        beta.push(row);
    }
    let dual_objective = alpha.iter().sum::<f64>() - beta_cost;
    Ok(DualCertificate { alpha, beta, beta_cost, dual_objective })
}

/// `ε²/((1+2ε)(1+3ε)) = 1/((k+2)(k+3))`.
pub fn objective_factor(k: u32) -> f64 {
    let k = k as f64;
    1.0 / ((k + 2.0) * (k + 3.0))
}

/// `Σ w_j F_j / dual objective`, a certified upper bound on the ratio to the LP optimum.
pub fn competitive_bound(cert: &DualCertificate, weighted_flow: f64) -> Result<f64> {
    if !(cert.dual_objective > 0.0) {
        return Err(Error::DegenerateObjective(cert.dual_objective));
    }
    Ok(weighted_flow / cert.dual_objective)
}

/// `Δ¹_j(t*) <= (k+2) w_j (t* - r_j)` at every boundary.
pub fn check_first_delay_lemma(profile: &DelayProfile, instance: &Instance, k: u32, tol: f64) -> CheckSummary {
    let mut tr = Tracker::new("first delay lemma", tol);
    let factor = k as f64 + 2.0;
    for jd in &profile.jobs {
        let job = instance.job(jd.job);
        for (b, &t) in jd.times.iter().enumerate() {
            let rhs = factor * job.weight as f64 * (t - job.release);
            tr.le(jd.first[b], rhs, || format!("job {} at t={t}", jd.job));
        }
    }
    tr.finish()
}

/// `Δ²_j(t*) <= c (k+2)/(k+1) p_j(t*)/φ(j,t*)` and the chained form with the
/// full size, where `c = 1/η` in flow mode and 1 in energy mode.
pub fn check_second_delay_lemma(
    profile: &DelayProfile,
    instance: &Instance,
    settings: &RunSettings,
    log: &EventLog,
    tol: f64,
) -> Result<(CheckSummary, CheckSummary)> {
    let cfg = &settings.cfg;
    let k = cfg.k as f64;
    let c = match cfg.mode {
        Mode::Flow => 1.0 / cfg.eta,
        Mode::Energy => 1.0,
    };
    let factor = c * (k + 2.0) / (k + 1.0);
    let intervals: Vec<&IntervalRecord> = log.intervals().collect();
    let mut direct = Tracker::new("second delay lemma", tol);
    let mut chained = Tracker::new("second delay lemma (full size)", tol);
    for jd in &profile.jobs {
        let job = instance.job(jd.job);
        for b in 0..jd.delta.len() {
            let iv = intervals[jd.first_interval + b];
            let snap = iv
                .job(jd.job)
                .ok_or_else(|| Error::LogInconsistent(format!("job {} missing from interval", jd.job)))?;
            let t = jd.times[b];
            let lhs = jd.second(b);
            let rate = instance.rate(snap.machine, jd.job);
            let load = snap.prefix_weight + job.weight;
            let phi = utility_at(cfg.mode, rate, load, instance.power(snap.machine))?;
            direct.le(lhs, factor * jd.residual[b] / phi, || format!("job {} at t={t}", jd.job));
            let full = factor * job.size / phi;
            chained.le(lhs, full, || format!("job {} at t={t}", jd.job));
        }
        let end = jd.times.len() - 1;
        direct.le(jd.second(end), 0.0, || format!("job {} at completion", jd.job));
    }
    Ok((direct.finish(), chained.finish()))
}

/// Every dual constraint at the left endpoint of every interval starting at
/// or after the release, and once more past the end of the log where `β = 0`.
/// The second summary asserts that slacks do not grow towards the right
/// endpoint, which is what makes the left endpoint binding.
pub fn check_dual_constraints(
    cert: &DualCertificate,
    instance: &Instance,
    settings: &RunSettings,
    log: &EventLog,
    tolerances: &Tolerances,
) -> Result<(CheckSummary, CheckSummary, Vec<Vec<f64>>)> {
    let m = instance.machine_count;
    let n = instance.job_count();
    let mode = settings.cfg.mode;
    let mut tail = vec![vec![0.0; n]; m];
    for (i, row) in tail.iter_mut().enumerate() {
        for (j, job) in instance.jobs.iter().enumerate() {
            let w = job.weight as f64;
            row[j] = match mode {
                Mode::Flow => w,
                Mode::Energy => instance.power(i).ok_or(Error::MissingPowerFunctions)?.eval_conjugate_inverse(w)?,
            };
        }
    }
    let mut constraints = Tracker::new("dual constraints", tolerances.relative);
    let mut endpoints = Tracker::new("dual constraints (right endpoints)", 0.0);
    let mut worst = vec![vec![f64::NEG_INFINITY; n]; m];
    let sides = |i: usize, j: usize, t: f64, beta: f64| {
        let job = &instance.jobs[j];
        let rate = job.rates[i];
        let lhs = rate * cert.alpha[j] / job.size - beta;
        let rhs = job.weight as f64 * rate * (t - job.release) / job.size + tail[i][j];
        (lhs, rhs)
    };
    let mut end_time = None;
    for (idx, iv) in log.intervals().enumerate() {
        end_time = Some(iv.end);
        for j in 0..n {
            if instance.jobs[j].release > iv.start {
                continue;
            }
            for i in 0..m {
                let beta = cert.beta[idx][i];
                let (lhs, rhs) = sides(i, j, iv.start, beta);
                let slack = (lhs - rhs) / scale(lhs, rhs);
                if slack > worst[i][j] {
                    worst[i][j] = slack;
                }
                constraints.le(lhs, rhs, || format!("machine {i}, job {}, t={}", JobId(j), iv.start));
                let (lhs_r, rhs_r) = sides(i, j, iv.end, beta);
                let slack_r = lhs_r - rhs_r;
                let allowed = (lhs - rhs) + tolerances.endpoint * scale(lhs_r, rhs_r);
                endpoints.slack(slack_r - allowed, || {
                    format!("machine {i}, job {}, interval [{}, {}]", JobId(j), iv.start, iv.end)
                });
            }
        }
    }
    if let Some(t) = end_time {
        for j in 0..n {
            for i in 0..m {
                let (lhs, rhs) = sides(i, j, t, 0.0);
                let slack = (lhs - rhs) / scale(lhs, rhs);
                if slack > worst[i][j] {
                    worst[i][j] = slack;
                }
                constraints.le(lhs, rhs, || format!("machine {i}, job {}, after t={t}", JobId(j)));
            }
        }
    }
    Ok((constraints.finish(), endpoints.finish(), worst))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CertificateReport {
    pub mode: Mode,
    pub k: u32,
    pub eta: f64,
    pub job_count: usize,
    pub weighted_flow: f64,
    pub energy: Option<f64>,
    pub delay_total: Option<f64>,
    pub dual_objective: Option<f64>,
    /// `ε²/((1+2ε)(1+3ε)) Σ w_j F_j`.
    pub objective_target: f64,
    pub competitive_bound: Option<f64>,
    pub checks: Vec<CheckSummary>,
    pub passed: bool,
}

impl CertificateReport {
    pub fn check(&self, name: &str) -> Option<&CheckSummary> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckSummary> + '_ {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Replays the log and evaluates every certificate check.
///
/// Structural problems (replay violations) are reported as failed checks;
/// errors are reserved for unusable input such as a mode mismatch.
pub fn certify(
    instance: &Instance,
    settings: &RunSettings,
    log: &EventLog,
    tolerances: &Tolerances,
) -> Result<CertificateReport> {
    instance.ensure_valid()?;
    check_settings(instance, settings)?;
    let tol = tolerances.relative;
    let cfg = &settings.cfg;
    let n = instance.job_count();
    let mut checks = Vec::new();

    let mut replay = Tracker::new("replay", 0.0);
    let violations = replay_check(instance, settings, log);
    for v in &violations {
        replay.fail(format!("{v}"));
    }
    if violations.is_empty() {
        replay.slack(0.0, String::new);
        replay.summary.worst_at = None;
    }
    checks.push(replay.finish());

    let completions = log.completions(n);
    let weighted_flow: f64 = instance
        .jobs
        .iter()
        .zip(&completions)
        .map(|(job, c)| job.weight as f64 * (c.unwrap_or(job.release) - job.release))
        .sum();
    let energy = match cfg.mode {
        Mode::Energy => {
            Some(log.intervals().map(|iv| iv.len() * iv.machines.iter().filter_map(|m| m.power).sum::<f64>()).sum())
        }
        Mode::Flow => None,
    };

    let profile = if violations.is_empty() { compute_delays(instance, settings, log).ok() } else { None };
    let mut report = CertificateReport {
        mode: cfg.mode,
        k: cfg.k,
        eta: cfg.eta,
        job_count: n,
        weighted_flow,
        energy,
        delay_total: None,
        dual_objective: None,
        objective_target: objective_factor(cfg.k) * weighted_flow,
        competitive_bound: None,
        checks,
        passed: false,
    };
    let Some(profile) = profile else {
        return Ok(report);
    };
    let cert = build_certificate(&profile, instance, settings, log)?;
    report.delay_total = Some(profile.total());
    report.dual_objective = Some(cert.dual_objective);
    report.competitive_bound = competitive_bound(&cert, weighted_flow).ok();

    let mut t = Tracker::new("accounting identity", tol);
    t.eq(profile.total(), weighted_flow, || "sum of delays vs weighted flow-time".into());
    report.checks.push(t.finish());

    let mut t = Tracker::new("pointwise delay identity", tol);
    for (idx, (iv, &d)) in log.intervals().zip(&profile.interval_delay).enumerate() {
        t.eq(d, iv.alive_weight() as f64, || format!("interval {idx} at t={}", iv.start));
    }
    report.checks.push(t.finish());

    report.checks.push(check_first_delay_lemma(&profile, instance, cfg.k, tol));
    let (second, chained) = check_second_delay_lemma(&profile, instance, settings, log, tol)?;
    report.checks.push(second);
    report.checks.push(chained);

    let (constraints, endpoints, _) = check_dual_constraints(&cert, instance, settings, log, tolerances)?;
    report.checks.push(constraints);
    report.checks.push(endpoints);

    let mut t = Tracker::new("dual signs", 0.0);
    for (j, &a) in cert.alpha.iter().enumerate() {
        t.le(-a, 0.0, || format!("alpha of job {}", JobId(j)));
    }
    for (idx, row) in cert.beta.iter().enumerate() {
        for (i, &b) in row.iter().enumerate() {
            t.le(-b, 0.0, || format!("beta of machine {i} in interval {idx}"));
        }
    }
    report.checks.push(t.finish());

    let target = report.objective_target;
    match cfg.mode {
        Mode::Flow => {
            let mut t = Tracker::new("dual objective identity", tol);
            t.eq(cert.dual_objective, target, || "dual objective vs factor * weighted flow-time".into());
            report.checks.push(t.finish());
        }
        Mode::Energy => {
            let mut t = Tracker::new("dual objective bound", tol);
            t.le(target, cert.dual_objective, || "factor * weighted flow-time vs dual objective".into());
            report.checks.push(t.finish());
            let mut t = Tracker::new("energy identity", tol);
            t.eq(energy.unwrap_or(f64::NAN), weighted_flow, || "energy vs weighted flow-time".into());
            report.checks.push(t.finish());
        }
    }

    report.checks.push(check_utility_monotonicity(log, n));
    report.checks.push(check_equilibria(instance, settings, log, tolerances.equilibrium)?);
    if let Some(c) = check_migration_bound(instance, &settings.policy, log) {
        report.checks.push(c);
    }

    report.passed = report.checks.iter().all(|c| c.passed);
    Ok(report)
}

/// Per-job utilities from interval snapshots and migration events, in log
/// order, must never decrease.
pub fn check_utility_monotonicity(log: &EventLog, job_count: usize) -> CheckSummary {
    use crate::sim::LogRecord;
    let mut t = Tracker::new("utility monotonicity", 0.0);
    let mut last: Vec<Option<f64>> = vec![None; job_count];
    let mut observe = |t: &mut Tracker, job: JobId, value: f64, time: f64| {
        if let Some(slot) = last.get_mut(job.0) {
            if let Some(prev) = *slot {
                t.le(prev, value, || format!("job {job} at t={time}: {prev} then {value}"));
            }
            *slot = Some(value);
        }
    };
    for record in &log.records {
        match record {
            LogRecord::Interval(iv) => {
                for s in &iv.jobs {
                    observe(&mut t, s.job, s.utility, iv.start);
                }
            }
            LogRecord::Event(e) => {
                if let EventKind::Migration { job, utility_before, utility_after, .. } = e.kind {
                    observe(&mut t, job, utility_before, e.time);
                    observe(&mut t, job, utility_after, e.time);
                }
            }
        }
    }
    t.finish()
}

/// At every interval start no job has an offer above `threshold * φ`.
pub fn check_equilibria(instance: &Instance, settings: &RunSettings, log: &EventLog, tol: f64) -> Result<CheckSummary> {
    let mut t = Tracker::new("equilibrium", tol);
    if !settings.policy.migrate {
        return Ok(t.finish());
    }
    let mode = settings.cfg.mode;
    let threshold = settings.policy.threshold;
    for iv in log.intervals() {
        for s in &iv.jobs {
            let w = instance.job(s.job).weight;
            for ms in &iv.machines {
                if ms.machine == s.machine {
                    continue;
                }
                let rate = instance.rate(ms.machine, s.job);
                let offer = utility_at(mode, rate, ms.total_weight + w, instance.power(ms.machine))?;
                t.le(offer, threshold * s.utility, || {
                    format!("job {} offered machine {} at t={}", s.job, ms.machine, iv.start)
                });
            }
        }
    }
    Ok(t.finish())
}

/// Per-job migration counts against `⌈log_θ W⌉ + ⌈log_θ n⌉`; `None` for `θ = 1`.
pub fn check_migration_bound(instance: &Instance, policy: &MigrationPolicy, log: &EventLog) -> Option<CheckSummary> {
    let bound = policy.migration_bound(instance)? as f64;
    let mut counts = vec![0u64; instance.job_count()];
    for e in log.events() {
        if let EventKind::Migration { job, .. } = e.kind {
            if let Some(c) = counts.get_mut(job.0) {
                *c += 1;
            }
        }
    }
    let mut t = Tracker::new("migration bound", 0.0);
    for (j, &c) in counts.iter().enumerate() {
        t.le(c as f64, bound, || format!("job {} migrated {c} times, bound {bound}", JobId(j)));
    }
    Some(t.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorConfig};
    use crate::instance::Job;
    use crate::power::PowerFunction;
    use crate::queue::PolicyConfig;
    use crate::sim::run;
    use approx::assert_relative_eq;

    fn job(i: usize, release: f64, size: f64, weight: u64, rates: Vec<f64>) -> Job {
        Job { id: format!("j{i}"), release, size, weight, rates }
    }

    fn settings(k: u32, eta: f64) -> RunSettings {
        RunSettings {
            cfg: PolicyConfig { k, eta, mode: Mode::Flow },
            policy: MigrationPolicy::bounded(k),
            speed_factor: 1.0,
        }
    }

    #[test]
    fn single_job_delay_is_weighted_flow() {
        let inst = Instance::flow(1, vec![job(0, 1.0, 3.0, 2, vec![1.5])]);
        let s = RunSettings::analysis(2, Mode::Flow).unwrap();
        let res = run(&inst, &s).unwrap();
        let profile = compute_delays(&inst, &s, &res.log).unwrap();
        assert_eq!(profile.jobs[0].delta, vec![2.0]);
        assert_relative_eq!(profile.jobs[0].total, res.weighted_flow, max_relative = 1e-15);
        let jd = &profile.jobs[0];
        assert_eq!(jd.first_at(res.completion[0]), jd.total);
        assert_eq!(jd.second_at(1.0), jd.total);
    }

    #[test]
    fn two_jobs_one_machine_delays() {
        // Unit jobs, k = 1, eta = 1: head rate 1/4, tail 3/4.
        let inst = Instance::flow(1, vec![job(0, 0.0, 1.0, 1, vec![1.0]), job(1, 0.0, 1.0, 1, vec![1.0])]);
        let cfg = PolicyConfig { k: 1, eta: 1.0, mode: Mode::Flow };
        let s = RunSettings { cfg, policy: MigrationPolicy::pure(), speed_factor: 1.0 };
        let res = run(&inst, &s).unwrap();
        let profile = compute_delays(&inst, &s, &res.log).unwrap();
        assert_eq!(profile.jobs[0].delta[0], 0.25);
        assert_eq!(profile.jobs[1].delta[0], 1.75);
        assert_eq!(profile.interval_delay[0], 2.0);
    }

    #[test]
    fn flow_objective_identity_and_bound() {
        for (k, bound) in [(1u32, 12.0), (2, 20.0)] {
            let inst = generate(&GeneratorConfig::flow(3, 15, 5)).unwrap();
            let s = RunSettings::analysis(k, Mode::Flow).unwrap();
            let res = run(&inst, &s).unwrap();
            let profile = compute_delays(&inst, &s, &res.log).unwrap();
            let cert = build_certificate(&profile, &inst, &s, &res.log).unwrap();
            assert_relative_eq!(cert.dual_objective, objective_factor(k) * res.weighted_flow, max_relative = 1e-9);
            assert_relative_eq!(competitive_bound(&cert, res.weighted_flow).unwrap(), bound, max_relative = 1e-9);
        }
        assert_eq!(objective_factor(2), 0.05);
    }

    #[test]
    fn empty_instance_certificate() {
        let inst = Instance::flow(2, vec![]);
        let s = settings(1, 4.0);
        let res = run(&inst, &s).unwrap();
        let profile = compute_delays(&inst, &s, &res.log).unwrap();
        let cert = build_certificate(&profile, &inst, &s, &res.log).unwrap();
        assert_eq!(cert.dual_objective, 0.0);
        assert!(cert.alpha.is_empty());
        assert!(matches!(competitive_bound(&cert, 0.0), Err(Error::DegenerateObjective(_))));
    }

    #[test]
    fn fresh_job_constraint_holds() {
        let inst = Instance::flow(2, vec![job(0, 0.0, 2.0, 1, vec![1.0, 0.5]), job(1, 0.5, 1.0, 3, vec![0.8, 0.0])]);
        let s = RunSettings::analysis(1, Mode::Flow).unwrap();
        let res = run(&inst, &s).unwrap();
        let report = certify(&inst, &s, &res.log, &Tolerances::default()).unwrap();
        assert!(report.passed, "{:?}", report.failed().collect::<Vec<_>>());
    }

    #[test]
    fn random_traces_pass_both_modes() {
        for seed in 0..5 {
            let inst = generate(&GeneratorConfig::flow(2, 5, seed)).unwrap();
            let s = RunSettings::analysis(2, Mode::Flow).unwrap();
            let res = run(&inst, &s).unwrap();
            let report = certify(&inst, &s, &res.log, &Tolerances::default()).unwrap();
            assert!(report.passed, "seed {seed}: {:?}", report.failed().collect::<Vec<_>>());

            let cfg = GeneratorConfig {
                power_palette: Some(vec![
                    PowerFunction::polynomial(2.0).unwrap(),
                    PowerFunction::polynomial(3.0).unwrap(),
                ]),
                ..GeneratorConfig::flow(2, 6, seed)
            };
            let inst = generate(&cfg).unwrap();
            let s = RunSettings::analysis(2, Mode::Energy).unwrap();
            let res = run(&inst, &s).unwrap();
            let report = certify(&inst, &s, &res.log, &Tolerances::default()).unwrap();
            assert!(report.passed, "energy seed {seed}: {:?}", report.failed().collect::<Vec<_>>());
        }
    }

    #[test]
    fn energy_requires_analysis_preset() {
        let sq = PowerFunction::polynomial(2.0).unwrap();
        let inst = Instance::energy(vec![job(0, 0.0, 1.0, 1, vec![1.0])], vec![sq]);
        let mut s = RunSettings::analysis(1, Mode::Energy).unwrap();
        s.speed_factor = 2.0;
        let res = run(&inst, &s).unwrap();
        assert!(matches!(certify(&inst, &s, &res.log, &Tolerances::default()), Err(Error::Config(_))));
    }

    #[test]
    fn tampered_log_fails_replay() {
        let inst = generate(&GeneratorConfig::flow(2, 6, 11)).unwrap();
        let s = RunSettings::analysis(1, Mode::Flow).unwrap();
        let res = run(&inst, &s).unwrap();
        let mut log = res.log.clone();
        for r in log.records.iter_mut() {
            if let crate::sim::LogRecord::Interval(iv) = r {
                if let Some(js) = iv.jobs.first_mut() {
                    js.nu *= 1.001;
                    break;
                }
            }
        }
        let report = certify(&inst, &s, &log, &Tolerances::default()).unwrap();
        assert!(!report.passed);
        assert!(!report.check("replay").unwrap().passed);
    }
}
