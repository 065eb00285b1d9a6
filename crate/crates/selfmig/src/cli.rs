//! The `selfmig` command line.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 when a certificate or the
//! acceptance sweep finds a violated check, 3 on an internal fault.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use selfmig_core::certify::{certify, Tolerances};
use selfmig_core::game::MigrationPolicy;
use selfmig_core::generate::{generate, ArrivalModel, GeneratorConfig, RateModel, SizeModel, WeightModel};
use selfmig_core::lp::{LpModel, SlotOptions};
use selfmig_core::oracle::{run_nonmigratory_greedy, run_wrr_baseline};
use selfmig_core::queue::PolicyConfig;
use selfmig_core::sim::{run, RunSettings};
use selfmig_core::{Error as CoreError, Instance, Mode, PowerFunction};

use crate::artifacts::{
    certificate_to_string, comparison_csv, result_to_string, timeseries_csv, ComparisonRow, ComparisonTotals,
};
use crate::suite::{run_suite, SuiteOptions};
use crate::{load_instance, load_log, save_instance, save_log, FormatError};

#[derive(Debug, Parser)]
#[command(name = "selfmig", version, about = "Non-clairvoyant scheduling by selfish migration on unrelated machines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded random instance.
    Generate(GenerateArgs),
    /// Simulate an instance; writes result.json, events.jsonl and timeseries.csv.
    Run(RunArgs),
    /// Recompute and check the dual certificate of an event log.
    Certify(CertifyArgs),
    /// Run SelfishMigrate, weighted round robin and non-migratory dispatch on one instance.
    Compare(CompareArgs),
    /// Write the time-slotted LP relaxation in CPLEX LP format.
    ExportLp(ExportLpArgs),
    /// Run the randomized acceptance sweep and print a pass/fail table.
    Suite(SuiteArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Flow,
    Energy,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Flow => Mode::Flow,
            ModeArg::Energy => Mode::Energy,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator configuration as JSON; the model flags below are ignored when given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub machines: usize,
    #[arg(long, default_value_t = 10)]
    pub jobs: usize,
    /// Overrides the seed of a configuration file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "flow")]
    pub mode: ModeArg,
    /// Energy-mode exponents `s^gamma`, assigned to machines round robin.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub gamma: Vec<f64>,
    /// `uniform:LO:HI`, `zero-inflated:P:LO:HI` or `related:LO:HI:S1,S2,...`.
    #[arg(long, default_value = "uniform:0.5:2", value_parser = parse_rate_model)]
    pub rates: RateModel,
    /// `uniform:LO:HI` or `power-law:EXPONENT:CAP`.
    #[arg(long, default_value = "uniform:1:4", value_parser = parse_weight_model)]
    pub weights: WeightModel,
    /// `uniform:LO:HI` or `exponential:MEAN`.
    #[arg(long, default_value = "uniform:0.5:2", value_parser = parse_size_model)]
    pub sizes: SizeModel,
    /// `poisson:RATE` or `batch`.
    #[arg(long, default_value = "poisson:1", value_parser = parse_arrival_model)]
    pub arrivals: ArrivalModel,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Defines `k = 1/epsilon`, which must be an integer.
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Sets `k` directly; `--k 0` gives weighted round robin.
    #[arg(long, conflicts_with = "epsilon")]
    pub k: Option<u32>,
    /// Total rate per machine in flow mode; defaults to `1 + 3/k` (1 when `k = 0`).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Migration threshold; defaults to `1 + 1/k`.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Dispatch on arrival and never migrate.
    #[arg(long)]
    pub no_migrate: bool,
    /// Cap on best-response moves per equilibrium computation.
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub speed_factor: f64,
    /// Expected instance mode; a mismatch is an error.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

impl PolicyArgs {
    pub fn settings(&self, instance: &Instance) -> Result<RunSettings, Failure> {
        if let Some(m) = self.mode {
            let m = Mode::from(m);
            if m != instance.mode {
                return Err(Failure::validation(format!("--mode {m} but the instance is in {} mode", instance.mode)));
            }
        }
        let mode = instance.mode;
        let cfg = match (self.k, self.eta) {
            (Some(0), eta) => PolicyConfig::round_robin(eta.unwrap_or(1.0), mode),
            (Some(k), None) => PolicyConfig::analysis(k, mode),
            (Some(k), Some(eta)) => PolicyConfig::new(k, eta, mode),
            (None, None) => PolicyConfig::from_epsilon(self.epsilon, mode),
            (None, Some(eta)) => {
                PolicyConfig::from_epsilon(self.epsilon, mode).and_then(|c| PolicyConfig::new(c.k, eta, mode))
            }
        }
        .map_err(Failure::core)?;
        let mut policy = match self.threshold {
            Some(t) => MigrationPolicy::with_threshold(t).map_err(Failure::core)?,
            None => MigrationPolicy::bounded(cfg.k),
        };
        if self.no_migrate {
            policy = MigrationPolicy { migrate: false, ..policy };
        }
        policy.iteration_cap = self.max_iterations;
        if !(self.speed_factor >= 1.0 && self.speed_factor.is_finite()) {
            return Err(Failure::validation(format!(
                "--speed-factor {} must be a finite value >= 1",
                self.speed_factor
            )));
        }
        Ok(RunSettings { cfg, policy, speed_factor: self.speed_factor })
    }
}

#[derive(Debug, Clone, Args)]
pub struct ToleranceArgs {
    /// Relative tolerance for identities and inequalities.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Allowed growth of a dual-constraint slack across an interval.
    #[arg(long, default_value_t = 1e-12)]
    pub endpoint_tolerance: f64,
    /// Allowed excess of a better offer at an equilibrium.
    #[arg(long, default_value_t = 1e-12)]
    pub equilibrium_tolerance: f64,
}

impl ToleranceArgs {
    pub fn tolerances(&self) -> Result<Tolerances, Failure> {
        for (name, v) in [
            ("--tolerance", self.tolerance),
            ("--endpoint-tolerance", self.endpoint_tolerance),
            ("--equilibrium-tolerance", self.equilibrium_tolerance),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Failure::validation(format!("{name} {v} must be finite and non-negative")));
            }
        }
        Ok(Tolerances {
            relative: self.tolerance,
            endpoint: self.endpoint_tolerance,
            equilibrium: self.equilibrium_tolerance,
        })
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Event log written by `run`.
    #[arg(long)]
    pub log: PathBuf,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
    /// Report path; defaults to certificate.json next to the log.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// CSV path; printed to standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportLpArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub slot_length: f64,
    /// Horizon in time units; defaults to the total work over the slowest positive rate plus the last release.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 2_000_000)]
    pub max_variables: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    /// Seeded instances per mode.
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long, default_value_t = 24)]
    pub migration_instances: usize,
    #[arg(long, default_value_t = 24)]
    pub tiny_fixtures: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1000)]
    pub queues: usize,
    #[arg(long, default_value_t = 4)]
    pub determinism_seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
}

#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Certification(String),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn validation(msg: impl Into<String>) -> Self {
        Failure::Validation(anyhow::anyhow!(msg.into()))
    }

    /// Sorts a core error into bad input or internal fault.
    pub fn core(e: CoreError) -> Self {
        match e {
            CoreError::Config(_)
            | CoreError::NegativeArgument(_)
            | CoreError::InvalidInstance { .. }
            | CoreError::MissingPowerFunctions
            | CoreError::Infeasible(_)
            | CoreError::LpTooLarge { .. }
            | CoreError::LpParse { .. }
            | CoreError::OracleCapExceeded(_)
            | CoreError::HorizonTooShort(_) => Failure::Validation(e.into()),
            CoreError::LogInconsistent(_) => Failure::Certification(e.to_string()),
            _ => Failure::Internal(e.into()),
        }
    }

    fn read(e: FormatError) -> Self {
        Failure::Validation(e.into())
    }

    fn write(e: FormatError) -> Self {
        Failure::Internal(e.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Certification(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        match self {
            Failure::Validation(e) => write!(f, "invalid input: {e:#}"),
            Failure::Certification(msg) => write!(f, "certification failed: {msg}"),
            Failure::Internal(e) => write!(f, "internal error: {e:#}"),
        }
    }
}

fn split_spec(s: &str) -> (&str, Vec<&str>) {
    let mut parts = s.splitn(2, ':');
    let kind = parts.next().unwrap_or("");
    let rest = parts.next().map(|r| r.split(':').collect()).unwrap_or_default();
    (kind, rest)
}

fn nums(args: &[&str], want: usize, spec: &str) -> Result<Vec<f64>, String> {
    if args.len() != want {
        return Err(format!("{spec}: expected {want} numeric parameters"));
    }
    args.iter().map(|a| a.parse::<f64>().map_err(|e| format!("{spec}: {a:?}: {e}"))).collect()
}

fn parse_rate_model(s: &str) -> Result<RateModel, String> {
    match split_spec(s) {
        ("uniform", a) => nums(&a, 2, s).map(|v| RateModel::Uniform { lo: v[0], hi: v[1] }),
        ("zero-inflated", a) => {
            nums(&a, 3, s).map(|v| RateModel::ZeroInflated { prob_zero: vec![v[0]], lo: v[1], hi: v[2] })
        }
        ("related", a) if a.len() == 3 => {
            let v = nums(&a[..2], 2, s)?;
            let speeds = a[2]
                .split(',')
                .map(|x| x.parse::<f64>().map_err(|e| format!("{s}: {x:?}: {e}")))
                .collect::<Result<_, _>>()?;
            Ok(RateModel::Related { speeds, demand_lo: v[0], demand_hi: v[1] })
        }
        _ => Err(format!("unknown rate model {s:?}")),
    }
}

fn parse_weight_model(s: &str) -> Result<WeightModel, String> {
    let int = |x: &str| x.parse::<u64>().map_err(|e| format!("{s}: {x:?}: {e}"));
    match split_spec(s) {
        ("uniform", a) if a.len() == 2 => Ok(WeightModel::UniformInt { lo: int(a[0])?, hi: int(a[1])? }),
        ("power-law", a) if a.len() == 2 => {
            Ok(WeightModel::PowerLaw { exponent: a[0].parse().map_err(|e| format!("{s}: {e}"))?, cap: int(a[1])? })
        }
        _ => Err(format!("unknown weight model {s:?}")),
    }
}

fn parse_size_model(s: &str) -> Result<SizeModel, String> {
    match split_spec(s) {
        ("uniform", a) => nums(&a, 2, s).map(|v| SizeModel::Uniform { lo: v[0], hi: v[1] }),
        ("exponential", a) => nums(&a, 1, s).map(|v| SizeModel::Exponential { mean: v[0] }),
        _ => Err(format!("unknown size model {s:?}")),
    }
}

fn parse_arrival_model(s: &str) -> Result<ArrivalModel, String> {
    match split_spec(s) {
        ("poisson", a) => nums(&a, 1, s).map(|v| ArrivalModel::Poisson { rate: v[0] }),
        ("batch", a) if a.is_empty() => Ok(ArrivalModel::BatchAtZero),
        _ => Err(format!("unknown arrival model {s:?}")),
    }
}

fn load_valid_instance(path: &Path) -> Result<Instance, Failure> {
    let instance = load_instance(path).map_err(Failure::read)?;
    instance.ensure_valid().map_err(Failure::core)?;
    Ok(instance)
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = crate::read_file(path).map_err(Failure::read)?;
            serde_json::from_str::<GeneratorConfig>(&text)
                .with_context(|| format!("generator config {}", path.display()))
                .map_err(Failure::Validation)?
        }
        None => {
            let power_palette = match args.mode {
                ModeArg::Flow => None,
                ModeArg::Energy => Some(
                    args.gamma
                        .iter()
                        .map(|&g| PowerFunction::polynomial(g))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(Failure::core)?,
                ),
            };
            GeneratorConfig {
                machine_count: args.machines,
                job_count: args.jobs,
                seed: 0,
                rate_model: args.rates.clone(),
                weight_model: args.weights.clone(),
                size_model: args.sizes.clone(),
                arrival_model: args.arrivals.clone(),
                power_palette,
            }
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let instance = generate(&cfg).map_err(Failure::core)?;
    save_instance(&instance, &args.out).map_err(Failure::write)?;
    println!(
        "wrote {} ({} mode, {} machines, {} jobs)",
        args.out.display(),
        instance.mode,
        instance.machine_count,
        instance.job_count()
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let instance = load_valid_instance(&args.instance)?;
    let settings = args.policy.settings(&instance)?;
    let res = run(&instance, &settings).map_err(Failure::core)?;
    let files = [
        ("result.json", result_to_string(&instance, &res)),
        ("timeseries.csv", timeseries_csv(&instance, &res).map_err(Failure::write)?),
    ];
    for (name, text) in &files {
        crate::write_file(&args.out.join(name), text.as_bytes()).map_err(Failure::write)?;
    }
    save_log(&instance, &settings, &res.log, &args.out.join("events.jsonl")).map_err(Failure::write)?;
    print!("weighted flow-time {}", res.weighted_flow);
    if let Some(e) = res.energy {
        print!(", energy {e}");
    }
    println!(", migrations {}", res.total_migrations());
    Ok(())
}

fn cmd_certify(args: &CertifyArgs) -> Result<(), Failure> {
    let tol = args.tolerances.tolerances()?;
    let file = load_log(&args.log).map_err(Failure::read)?;
    file.instance.ensure_valid().map_err(Failure::core)?;
    let report = certify(&file.instance, &file.settings, &file.log, &tol).map_err(Failure::core)?;
    let out = match &args.out {
        Some(p) => p.clone(),
        None => args.log.with_file_name("certificate.json"),
    };
    crate::write_file(&out, certificate_to_string(&report, &tol).as_bytes()).map_err(Failure::write)?;
    let mut stdout = std::io::stdout().lock();
    for c in &report.checks {
        let _ = writeln!(
            stdout,
            "{:<4} {:<34} {:>9} checked {:>6} violations",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.checked,
            c.violations
        );
    }
    if let Some(b) = report.competitive_bound {
        let _ = writeln!(stdout, "certified ratio {b}");
    }
    if report.passed {
        return Ok(());
    }
    let failed: Vec<String> = report
        .failed()
        .map(|c| format!("{} ({} violations, worst at {})", c.name, c.violations, c.worst_at.as_deref().unwrap_or("-")))
        .collect();
    Err(Failure::Certification(failed.join("; ")))
}

fn cmd_compare(args: &CompareArgs) -> Result<(), Failure> {
    let instance = load_valid_instance(&args.instance)?;
    let settings = args.policy.settings(&instance)?;
    let sm = run(&instance, &settings).map_err(Failure::core)?;
    let wrr =
        run_wrr_baseline(&instance, settings.cfg.eta, settings.policy, settings.speed_factor).map_err(Failure::core)?;
    let nm = match instance.mode {
        Mode::Flow => {
            Some(run_nonmigratory_greedy(&instance, settings.cfg, settings.speed_factor).map_err(Failure::core)?)
        }
        Mode::Energy => None,
    };
    let rows = [
        ComparisonRow { scheduler: "selfish-migrate", result: Some(ComparisonTotals::of(&sm)) },
        ComparisonRow { scheduler: "wrr-k0", result: Some(ComparisonTotals::of(&wrr)) },
        ComparisonRow { scheduler: "non-migratory", result: nm.as_ref().map(ComparisonTotals::of) },
    ];
    let csv = comparison_csv(&rows).map_err(Failure::write)?;
    match &args.out {
        Some(p) => crate::write_file(p, csv.as_bytes()).map_err(Failure::write)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_export_lp(args: &ExportLpArgs) -> Result<(), Failure> {
    let instance = load_valid_instance(&args.instance)?;
    let opts = SlotOptions { slot_length: args.slot_length, horizon: args.horizon, max_variables: args.max_variables };
    let model = LpModel::time_slotted(&instance, &opts).map_err(Failure::core)?;
    crate::write_file(&args.out, model.to_lp_string().as_bytes()).map_err(Failure::write)?;
    println!(
        "wrote {} ({} variables, {} constraints)",
        args.out.display(),
        model.variables.len(),
        model.constraints.len()
    );
    Ok(())
}

fn cmd_suite(args: &SuiteArgs) -> Result<(), Failure> {
    let opts = SuiteOptions {
        instances: args.instances,
        migration_instances: args.migration_instances,
        tiny_fixtures: args.tiny_fixtures,
        samples: args.samples,
        queues: args.queues,
        determinism_seeds: args.determinism_seeds,
        seed: args.seed,
        tolerances: args.tolerances.tolerances()?,
    };
    let outcomes = run_suite(&opts);
    for o in &outcomes {
        println!("{o}");
    }
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| format!("{} {}", o.id, o.name)).collect();
    if failed.is_empty() {
        println!("all {} criteria passed", outcomes.len());
        Ok(())
    } else {
        Err(Failure::Certification(format!("criteria failed: {}", failed.join(", "))))
    }
}

pub fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Compare(a) => cmd_compare(a),
        Command::ExportLp(a) => cmd_export_lp(a),
        Command::Suite(a) => cmd_suite(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("selfmig: {f}");
            f.exit_code()
        }
    }
}
