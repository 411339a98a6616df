use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error in key '{key}': {message}")]
    Config { key: String, message: String },
    #[error("spec error in field '{field}': {message}")]
    Spec { field: String, message: String },
    #[error("{path}: row {row}, column {column}: {message}")]
    Parse { path: PathBuf, row: usize, column: usize, message: String },
    #[error("{path}: chain file format version {found}, this build reads version {expected}")]
    VersionMismatch { path: PathBuf, found: u64, expected: u64 },
    #[error("{path}: {message}")]
    ChainFile { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] monogp::Error),
}

impl CliError {
    /// 1 for usage, config, spec and input-format problems; 2 for runtime and numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::Config { .. }
            | CliError::Spec { .. }
            | CliError::Parse { .. }
            | CliError::VersionMismatch { .. }
            | CliError::ChainFile { .. } => 1,
            CliError::Io { .. } | CliError::Model(_) => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
