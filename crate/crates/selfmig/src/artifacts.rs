//! Result, certificate, comparison and time-series outputs.

use serde::Serialize;

use selfmig_core::certify::{CertificateReport, Tolerances};
use selfmig_core::sim::{EventKind, LogRecord, RunSettings, ScheduleResult};
use selfmig_core::{Instance, Mode};

use crate::FormatError;

pub const RESULT_VERSION: u64 = 1;
pub const CERTIFICATE_VERSION: u64 = 1;

#[derive(Serialize)]
struct JobOutcome<'a> {
    id: &'a str,
    release: f64,
    weight: u64,
    completion: f64,
    flow_time: f64,
    migrations: u32,
}

#[derive(Serialize)]
struct ResultDoc<'a> {
    version: u64,
    mode: Mode,
    settings: &'a RunSettings,
    weighted_flow: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy: Option<f64>,
    total_migrations: u64,
    max_migrations: u32,
    makespan: f64,
    jobs: Vec<JobOutcome<'a>>,
}

pub fn makespan(result: &ScheduleResult) -> f64 {
    result.completion.iter().copied().fold(0.0, f64::max)
}

pub fn result_to_string(instance: &Instance, result: &ScheduleResult) -> String {
    let jobs = instance
        .jobs
        .iter()
        .enumerate()
        .map(|(j, job)| JobOutcome {
            id: &job.id,
            release: job.release,
            weight: job.weight,
            completion: result.completion[j],
            flow_time: result.flow_time[j],
            migrations: result.migrations[j],
        })
        .collect();
    let doc = ResultDoc {
        version: RESULT_VERSION,
        mode: instance.mode,
        settings: &result.settings,
        weighted_flow: result.weighted_flow,
        energy: result.energy,
        total_migrations: result.total_migrations(),
        max_migrations: result.migrations.iter().copied().max().unwrap_or(0),
        makespan: makespan(result),
        jobs,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("result serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct CertificateDoc<'a> {
    version: u64,
    tolerances: &'a Tolerances,
    #[serde(flatten)]
    report: &'a CertificateReport,
}

pub fn certificate_to_string(report: &CertificateReport, tolerances: &Tolerances) -> String {
    let doc = CertificateDoc { version: CERTIFICATE_VERSION, tolerances, report };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

/// One scheduler's totals in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub scheduler: &'static str,
    /// `None` when the scheduler is not defined for the instance's mode.
    pub result: Option<ComparisonTotals>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTotals {
    pub weighted_flow: f64,
    pub energy: Option<f64>,
    pub total_migrations: u64,
    pub max_migrations: u32,
    pub makespan: f64,
}

impl ComparisonTotals {
    pub fn of(result: &ScheduleResult) -> Self {
        ComparisonTotals {
            weighted_flow: result.weighted_flow,
            energy: result.energy,
            total_migrations: result.total_migrations(),
            max_migrations: result.migrations.iter().copied().max().unwrap_or(0),
            makespan: makespan(result),
        }
    }
}

pub const COMPARISON_COLUMNS: [&str; 7] =
    ["scheduler", "status", "weighted_flow", "energy", "total_migrations", "max_migrations", "makespan"];

pub fn comparison_csv(rows: &[ComparisonRow]) -> Result<String, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COMPARISON_COLUMNS)?;
    for row in rows {
        match &row.result {
            Some(t) => w.write_record([
                row.scheduler.to_string(),
                "ok".into(),
                t.weighted_flow.to_string(),
                t.energy.map(|e| e.to_string()).unwrap_or_default(),
                t.total_migrations.to_string(),
                t.max_migrations.to_string(),
                t.makespan.to_string(),
            ])?,
            None => w.write_record([row.scheduler, "unsupported", "", "", "", "", ""])?,
        }
    }
    csv_string(w)
}

pub const TIMESERIES_COLUMNS: [&str; 6] = ["time", "series", "machine", "job", "value", "to_machine"];

/// Plot-ready series: per-machine weight `W(i,t)` and per-job utility at the
/// start of every interval, plus one row per migration.
pub fn timeseries_csv(instance: &Instance, result: &ScheduleResult) -> Result<String, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TIMESERIES_COLUMNS)?;
    for record in &result.log.records {
        match record {
            LogRecord::Interval(iv) => {
                let t = iv.start.to_string();
                for ms in &iv.machines {
                    w.write_record([
                        t.as_str(),
                        "machine_weight",
                        &ms.machine.to_string(),
                        "",
                        &ms.total_weight.to_string(),
                        "",
                    ])?;
                }
                for js in &iv.jobs {
                    w.write_record([
                        t.as_str(),
                        "utility",
                        &js.machine.to_string(),
                        &instance.job(js.job).id,
                        &js.utility.to_string(),
                        "",
                    ])?;
                }
            }
            LogRecord::Event(e) => {
                if let EventKind::Migration { job, from, to, utility_after, .. } = e.kind {
                    w.write_record([
                        e.time.to_string(),
                        "migration".into(),
                        from.to_string(),
                        instance.job(job).id.clone(),
                        utility_after.to_string(),
                        to.to_string(),
                    ])?;
                }
            }
        }
    }
    csv_string(w)
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String, FormatError> {
    let bytes = w.into_inner().map_err(|e| FormatError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| FormatError::Csv(e.to_string()))
}

impl From<csv::Error> for FormatError {
    fn from(e: csv::Error) -> Self {
        FormatError::Csv(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use selfmig_core::generate::{generate, GeneratorConfig};
    use selfmig_core::sim::run;

    #[test]
    fn timeseries_has_one_weight_row_per_machine_interval() {
        let inst = generate(&GeneratorConfig::flow(2, 5, 4)).unwrap();
        let res = run(&inst, &RunSettings::analysis(1, Mode::Flow).unwrap()).unwrap();
        let text = timeseries_csv(&inst, &res).unwrap();
        let weight_rows = text.lines().filter(|l| l.contains(",machine_weight,")).count();
        let expected: usize = res.log.intervals().map(|iv| iv.machines.len()).sum();
        assert_eq!(weight_rows, expected);
        let migrations = text.lines().filter(|l| l.contains(",migration,")).count() as u64;
        assert_eq!(migrations, res.total_migrations());
    }

    #[test]
    fn result_document_lists_every_job() {
        let inst = generate(&GeneratorConfig::flow(2, 6, 2)).unwrap();
        let res = run(&inst, &RunSettings::analysis(2, Mode::Flow).unwrap()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&result_to_string(&inst, &res)).unwrap();
        assert_eq!(v["jobs"].as_array().unwrap().len(), 6);
        assert_eq!(v["weighted_flow"].as_f64().unwrap(), res.weighted_flow);
        assert!(v.get("energy").is_none());
    }
}
