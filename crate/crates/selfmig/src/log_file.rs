//! Event logs as JSON lines.
//!
//! The first line is a header carrying the instance and the run settings, so
//! a log file is enough to certify a run. Every further line is one event or
//! one interval record, in log order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use selfmig_core::sim::{EventLog, LogRecord, RunSettings};
use selfmig_core::Instance;

use crate::instance_file::{instance_from_value, InstanceDoc};
use crate::FormatError;

pub const LOG_FORMAT: &str = "selfmig-event-log";
pub const LOG_VERSION: u64 = 1;

#[derive(Serialize)]
struct HeaderOut<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    format: &'static str,
    version: u64,
    settings: &'a RunSettings,
    instance: InstanceDoc,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderIn {
    #[serde(rename = "type")]
    kind: String,
    format: String,
    version: u64,
    settings: RunSettings,
    instance: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogFile {
    pub instance: Instance,
    pub settings: RunSettings,
    pub log: EventLog,
}

pub fn log_to_string(instance: &Instance, settings: &RunSettings, log: &EventLog) -> String {
    let header = HeaderOut {
        kind: "header",
        format: LOG_FORMAT,
        version: LOG_VERSION,
        settings,
        instance: InstanceDoc::from_instance(instance),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for record in &log.records {
        out.push_str(&serde_json::to_string(record).expect("log records serialize"));
        out.push('\n');
    }
    out
}

pub fn log_from_str(text: &str) -> Result<LogFile, FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (first, header_line) =
        lines.next().ok_or_else(|| FormatError::Line { line: 1, msg: "empty event log".into() })?;
    let at = |idx: usize, msg: String| FormatError::Line { line: idx + 1, msg };
    let header: HeaderIn = serde_json::from_str(header_line).map_err(|e| at(first, format!("header: {e}")))?;
    if header.kind != "header" || header.format != LOG_FORMAT {
        return Err(at(first, format!("not a {LOG_FORMAT} header")));
    }
    if header.version != LOG_VERSION {
        return Err(FormatError::Version { what: "event log", found: header.version, expected: LOG_VERSION });
    }
    let instance = instance_from_value(header.instance)?;
    let mut records = Vec::new();
    for (idx, line) in lines {
        let record: LogRecord = serde_json::from_str(line).map_err(|e| at(idx, e.to_string()))?;
        records.push(record);
    }
    Ok(LogFile { instance, settings: header.settings, log: EventLog { records } })
}

pub fn save_log(instance: &Instance, settings: &RunSettings, log: &EventLog, path: &Path) -> Result<(), FormatError> {
    crate::write_file(path, log_to_string(instance, settings, log).as_bytes())
}

pub fn load_log(path: &Path) -> Result<LogFile, FormatError> {
    log_from_str(&crate::read_file(path)?)
}
