use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("linear solve did not converge (relative residual {residual:e})")]
    SolveFailed { residual: f64 },
    #[error("unsupported case: {0}")]
    Unsupported(String),
    #[error("path {path}: {source}")]
    PathFailed {
        path: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{0}")]
    Degenerate(String),
    #[error("no admissible l1 on the search grid (best violation {best_violation:e} at l1 = {best_l1})")]
    NoAdmissibleSequence { best_l1: f64, best_violation: f64 },
    #[error("iteration stalled after {iterations} iterations (residual {residual:e})")]
    Stagnation {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
