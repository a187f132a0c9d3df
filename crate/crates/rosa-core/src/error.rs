use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum RosaError {
    /// The caller broke a precondition (bad dimensions, stepping a finished episode, ...).
    #[error("usage error: {0}")]
    Usage(String),
    /// A layout, instance file or config could not be turned into a valid object.
    #[error("construction error: {0}")]
    Construction(String),
    /// A numerical fault during learning (NaN logits, NaN gradients, divergence).
    #[error("numerical fault: {0}")]
    Numerical(String),
    /// Iterative solver exceeded its budget.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    /// A segment or record broke the switching convention.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, RosaError>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(RosaError::Usage(msg.into()))
}
