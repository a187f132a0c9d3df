use std::path::PathBuf;
use thiserror::Error;

use rosa_core::RosaError;

/// Errors surfaced by the experiment runner, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum ExpError {
    /// The config or an input file is malformed.
    #[error("config error: {0}")]
    Config(String),
    /// The caller asked for something the inputs cannot provide.
    #[error("usage error: {0}")]
    Usage(String),
    /// Training aborted; the last consistent parameters were saved.
    #[error("run fault: {source} (checkpoint: {})", checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into()))]
    Fault { source: RosaError, checkpoint: Option<PathBuf> },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Core(#[from] RosaError),
}

impl ExpError {
    /// 2 for bad configs and usage, 1 for everything that failed at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Config(_) | ExpError::Usage(_) => 2,
            ExpError::Core(RosaError::Construction(_) | RosaError::Parse(_) | RosaError::Usage(_)) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> ExpError {
        let path = path.into();
        move |source| ExpError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, ExpError>;
