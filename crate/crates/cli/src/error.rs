use std::path::PathBuf;

use thiserror::Error;

/// Failure of a CLI run, mapped onto the process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, missing file, or inputs the library rejects.
    #[error("{0}")]
    Validation(String),

    /// The numerics failed or an expectation given on the command line was
    /// not met.
    #[error("{0}")]
    Numerical(String),

    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) => 2,
        }
    }

    /// Wraps a library error with the config field it came from.
    pub fn from_core(field: &str, e: neurochan_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(format!("{field}: {e}"))
        } else {
            CliError::Numerical(format!("{field}: {e}"))
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
