use thiserror::Error;

/// Errors produced by model construction, inference and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension index {index} out of range for {dims} dimensions")]
    Index { index: usize, dims: usize },

    #[error("invalid event sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("intensity at event {event} is not positive ({value})")]
    NonFiniteLikelihood { event: usize, value: f64 },

    #[error("latent state inconsistent with data: {0}")]
    InconsistentLatent(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("process is not stationary: spectral radius {0:.6} >= 1")]
    NonStationary(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}: {malformed} of {total} rows malformed (first at line {first_line}: {first_reason})")]
    Malformed {
        path: String,
        malformed: usize,
        total: usize,
        first_line: usize,
        first_reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {value}")))
    }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and > 0, got {value}")))
    }
}
