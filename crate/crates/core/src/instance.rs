//! Problem instances: machines, jobs and optional per-machine power functions.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::power::PowerFunction;

/// Position of a job in its instance. Orders every tie-break in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct JobId(pub usize);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Mode {
    /// Fixed-speed machines, weighted flow-time objective.
    Flow,
    /// Speed-scaled machines, weighted flow-time plus energy.
    Energy,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Flow => "flow",
            Mode::Energy => "energy",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: String,
    pub release: f64,
    /// Work units; hidden from the policy and the migration game.
    pub size: f64,
    pub weight: u64,
    /// Processing rate on each machine. Zero means the machine cannot run the job.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub machine_count: usize,
    pub mode: Mode,
    pub jobs: Vec<Job>,
    pub power_functions: Option<Vec<PowerFunction>>,
}

impl Instance {
    pub fn flow(machine_count: usize, jobs: Vec<Job>) -> Self {
        Instance { machine_count, mode: Mode::Flow, jobs, power_functions: None }
    }

    pub fn energy(jobs: Vec<Job>, power_functions: Vec<PowerFunction>) -> Self {
        Instance {
            machine_count: power_functions.len(),
            mode: Mode::Energy,
            jobs,
            power_functions: Some(power_functions),
        }
    }

    pub fn job_count(&self) -> usize {
        self.jobs.len()
    }

    pub fn job(&self, job: JobId) -> &Job {
        &self.jobs[job.0]
    }

    pub fn job_ids(&self) -> impl Iterator<Item = JobId> + '_ {
        (0..self.jobs.len()).map(JobId)
    }

    pub fn rate(&self, machine: usize, job: JobId) -> f64 {
        self.jobs[job.0].rates[machine]
    }

    pub fn power(&self, machine: usize) -> Option<&PowerFunction> {
        self.power_functions.as_ref().and_then(|p| p.get(machine))
    }

    /// Ratio of the largest to the smallest job weight (1 for empty instances).
    pub fn weight_ratio(&self) -> f64 {
        let max = self.jobs.iter().map(|j| j.weight).max().unwrap_or(1);
        let min = self.jobs.iter().map(|j| j.weight).min().unwrap_or(1).max(1);
        max as f64 / min as f64
    }

    pub fn total_weight(&self) -> u64 {
        self.jobs.iter().map(|j| j.weight).sum()
    }

    /// Returns every broken invariant; an empty list means the instance is valid.
    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    /// Like [`Instance::validate`] but as a `Result`, for engine entry points.
    pub fn ensure_valid(&self) -> crate::Result<()> {
        let violations = self.validate();
        match violations.first() {
            None => Ok(()),
            Some(first) => {
                Err(crate::Error::InvalidInstance { count: violations.len(), first: alloc::format!("{first}") })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Subject {
    Instance,
    Job { index: usize, id: String },
    Machine(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    NoMachines,
    NegativeRelease(f64),
    NonPositiveSize(f64),
    WeightBelowOne,
    RateCount { expected: usize, found: usize },
    InvalidRate { machine: usize, value: f64 },
    NoPositiveRate,
    DuplicateId,
    PowerFunctionsMissing,
    PowerFunctionsUnexpected,
    PowerFunctionCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub subject: Subject,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.subject {
            Subject::Instance => f.write_str("instance: ")?,
            Subject::Job { index, id } => write!(f, "job {id:?} (index {index}): ")?,
            Subject::Machine(i) => write!(f, "machine {i}: ")?,
        }
        match &self.kind {
            ViolationKind::NoMachines => f.write_str("machine count must be positive"),
            ViolationKind::NegativeRelease(r) => write!(f, "release {r} must be >= 0"),
            ViolationKind::NonPositiveSize(p) => write!(f, "size {p} must be > 0"),
            ViolationKind::WeightBelowOne => f.write_str("weight >= 1 required"),
            ViolationKind::RateCount { expected, found } => {
                write!(f, "expected {expected} rates, found {found}")
            }
            ViolationKind::InvalidRate { machine, value } => {
                write!(f, "rate {value} on machine {machine} must be finite and >= 0")
            }
            ViolationKind::NoPositiveRate => f.write_str("no positive rate on any machine"),
            ViolationKind::DuplicateId => f.write_str("duplicate job id"),
            ViolationKind::PowerFunctionsMissing => f.write_str("energy mode requires power functions"),
            ViolationKind::PowerFunctionsUnexpected => f.write_str("power functions given in flow mode"),
            ViolationKind::PowerFunctionCount { expected, found } => {
                write!(f, "expected {expected} power functions, found {found}")
            }
        }
    }
}

fn validate(instance: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let m = instance.machine_count;
    if m == 0 {
        out.push(Violation { subject: Subject::Instance, kind: ViolationKind::NoMachines });
    }
    match (instance.mode, &instance.power_functions) {
        (Mode::Energy, None) => {
            out.push(Violation { subject: Subject::Instance, kind: ViolationKind::PowerFunctionsMissing })
        }
        (Mode::Flow, Some(_)) => {
            out.push(Violation { subject: Subject::Instance, kind: ViolationKind::PowerFunctionsUnexpected })
        }
        (Mode::Energy, Some(p)) if p.len() != m => out.push(Violation {
            subject: Subject::Instance,
            kind: ViolationKind::PowerFunctionCount { expected: m, found: p.len() },
        }),
        _ => {}
    }

    let mut seen = BTreeSet::new();
    for (index, job) in instance.jobs.iter().enumerate() {
        let subject = || Subject::Job { index, id: job.id.clone() };
        let mut push = |kind| out.push(Violation { subject: subject(), kind });
        if !seen.insert(job.id.as_str()) {
            push(ViolationKind::DuplicateId);
        }
        if !(job.release >= 0.0 && job.release.is_finite()) {
            push(ViolationKind::NegativeRelease(job.release));
        }
        if !(job.size > 0.0 && job.size.is_finite()) {
            push(ViolationKind::NonPositiveSize(job.size));
        }
        if job.weight < 1 {
            push(ViolationKind::WeightBelowOne);
        }
        if job.rates.len() != m {
            push(ViolationKind::RateCount { expected: m, found: job.rates.len() });
        }
        for (machine, &value) in job.rates.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                push(ViolationKind::InvalidRate { machine, value });
            }
        }
        if !job.rates.iter().any(|&r| r > 0.0 && r.is_finite()) {
            push(ViolationKind::NoPositiveRate);
        }
    }
    out
}
