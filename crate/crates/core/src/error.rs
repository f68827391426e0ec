use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("communication graph is not connected")]
    Disconnected,
    #[error("incompatible mixing scheme: {0}")]
    Compatibility(String),
    #[error("grid search supports at most 4 dimensions, got {0}")]
    Dimensionality(usize),
    #[error("no feasible point found: {0}")]
    Infeasible(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unsupported operation: {0}")]
    Capability(String),
    #[error("need at least {needed} data points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("horizon mismatch: trace has {trace} rounds, problem has {problem}")]
    HorizonMismatch { trace: usize, problem: usize },
    #[error("invalid config at `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
