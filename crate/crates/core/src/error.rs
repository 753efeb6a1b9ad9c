//! Error type shared by the whole crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension of an input is structurally invalid (e.g. zero pairs).
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two inputs that must agree in shape do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A power vector violates the box constraint of the problem.
    #[error("infeasible power vector: {0}")]
    Infeasible(String),

    /// A NaN or infinity showed up where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A backward pass was attempted with a cache from an older forward pass.
    #[error("stale forward cache: {0}")]
    StaleCache(String),

    /// An operation that needs at least one element got none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A dataset or checkpoint file does not match its declared format.
    #[error("data format error: {0}")]
    Format(String),

    /// The experiment configuration is unusable.
    #[error("config error: {0}")]
    Config(String),

    /// Training aborted; the message carries the offending context.
    #[error("training aborted: {0}")]
    TrainAbort(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 training abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => 2,
            Error::Format(_) | Error::Io(_) | Error::Json(_) | Error::EmptyInput(_) => 3,
            Error::TrainAbort(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
