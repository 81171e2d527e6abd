use std::path::{Path, PathBuf};

use a3d::A3dError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] A3dError),
}

/// Attaches `path` to I/O failures of `r`.
pub fn at_path<T>(path: &Path, r: a3d::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        A3dError::Io(source) => CliError::File {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Core(other),
    })
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(A3dError::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(A3dError::from(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_VALIDATION,
            CliError::File { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                A3dError::InfeasibleBudget { .. } => EXIT_INFEASIBLE,
                A3dError::Io(_) => EXIT_IO,
                A3dError::NonFiniteLoss(_) => EXIT_FAILURE,
                _ => EXIT_VALIDATION,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
