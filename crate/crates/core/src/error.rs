use alloc::string::String;
use alloc::vec::Vec;

use crate::instance::JobId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("power function evaluated at negative argument {0}")]
    NegativeArgument(f64),
    #[error("numeric inversion failed for value {0}")]
    Inversion(f64),
    #[error("queue of machine {machine} is empty")]
    EmptyQueue { machine: usize },
    #[error("job {job} is already queued on machine {machine}")]
    DuplicateJob { job: JobId, machine: usize },
    #[error("job {job} is not queued on machine {machine}")]
    AbsentJob { job: JobId, machine: usize },
    #[error("job {0} has no machine with a positive offer")]
    Infeasible(JobId),
    #[error("best-response dynamics made {moves} moves without converging; recent movers: {}", job_list(.recent))]
    NonConvergence { moves: usize, recent: Vec<JobId> },
    #[error("schedule stalled at t={time}: active jobs but no positive speed")]
    Stalled { time: f64 },
    #[error("invalid instance ({count} violations), first: {first}")]
    InvalidInstance { count: usize, first: String },
    #[error("energy mode requires one power function per machine")]
    MissingPowerFunctions,
    #[error("event log inconsistent: {0}")]
    LogInconsistent(String),
    #[error("dual objective {0} is not positive")]
    DegenerateObjective(f64),
    #[error("LP has {vars} variables, above the cap of {cap}")]
    LpTooLarge { vars: usize, cap: usize },
    #[error("LP parse error on line {line}: {msg}")]
    LpParse { line: usize, msg: String },
    #[error("oracle explored more than {0} states")]
    OracleCapExceeded(usize),
    #[error("no discrete schedule completes every job within {0} slots")]
    HorizonTooShort(usize),
}

fn job_list(jobs: &[JobId]) -> alloc::string::String {
    let parts: alloc::vec::Vec<alloc::string::String> = jobs.iter().map(|j| alloc::format!("{j}")).collect();
    parts.join(", ")
}
