use thiserror::Error;

#[derive(Debug, Error)]
pub enum CarrierError {
    #[error("singular pivot at index {index} (magnitude {magnitude:e})")]
    SingularPivot { index: usize, magnitude: f64 },
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("turning point reached at x = {x}")]
    TurningPoint { x: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("corrupt database line {line}: {message}")]
    CorruptLine { line: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CarrierError>;
