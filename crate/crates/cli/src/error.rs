use std::path::Path;

use coloc_core::RunError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: row {row}: {reason}")]
    Schema { path: String, row: u64, reason: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Schema { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            context: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn schema(path: &Path, row: u64, reason: impl Into<String>) -> Self {
        CliError::Schema {
            path: path.display().to_string(),
            row,
            reason: reason.into(),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => CliError::Config(c.to_string()),
            RunError::Numerical { step, source } => CliError::Numerical(format!("at step {step}: {source}")),
            RunError::Contract(msg) => CliError::Numerical(msg),
        }
    }
}
