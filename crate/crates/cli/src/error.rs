use std::path::PathBuf;

use lieruin_core::PassageError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Numerical(#[from] PassageError),

    #[error("no applicable method:\n{0}")]
    NoMethod(String),

    #[error("nothing to compare: {0}")]
    NothingToCompare(String),

    #[error("comparison failed: {0}")]
    Comparison(String),
}

impl CliError {
    /// 0 success, 1 usage or config, 2 numerical failure, 3 comparison failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } | CliError::NothingToCompare(_) => 1,
            CliError::Numerical(_) | CliError::NoMethod(_) => 2,
            CliError::Comparison(_) => 3,
        }
    }
}
