//! File formats, the acceptance sweep and the command-line front end for
//! `selfmig-core`.

use std::path::{Path, PathBuf};

pub mod artifacts;
pub mod cli;
pub mod instance_file;
pub mod log_file;
pub mod suite;

pub use instance_file::{instance_from_str, instance_to_string, load_instance, save_instance};
pub use log_file::{load_log, log_from_str, log_to_string, save_log, LogFile};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("parse error at line {line}, column {column}: {msg}")]
    Json { line: usize, column: usize, msg: String },
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{what} schema version {found} is not supported (expected {expected})")]
    Version { what: &'static str, found: u64, expected: u64 },
    #[error("job {id:?} (index {index}): {msg}")]
    Job { id: String, index: usize, msg: String },
    #[error("field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl FormatError {
    fn json(e: serde_json::Error) -> Self {
        FormatError::Json { line: e.line(), column: e.column(), msg: e.to_string() }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.to_owned(), source })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| FormatError::Io { path: dir.to_owned(), source })?;
    }
    std::fs::write(path, bytes).map_err(|source| FormatError::Io { path: path.to_owned(), source })
}
