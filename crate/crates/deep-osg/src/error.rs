//! Crate-wide error type. Library code never panics on bad input; every
//! fallible operation returns `Result<T, Error>`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or layout disagreement between two objects that must match.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A time lag outside the range accepted by the architecture or sampler.
    #[error("invalid time lag {value}: {reason}")]
    InvalidDelta { value: f64, reason: String },

    /// Bad experiment configuration (also covers unknown system names).
    #[error("config error: {0}")]
    Config(String),

    /// Numerical procedure failed to converge or left the finite range.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An operation that needs a non-empty collection got an empty one.
    #[error("empty input: {0}")]
    Empty(String),

    /// Malformed or truncated file contents (bad magic, short read).
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Classifies the error for the CLI exit-code contract:
    /// 2 for configuration problems, 3 for numeric failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Empty(_) => 2,
            Error::NonFinite(_) | Error::Numeric(_) | Error::InvalidDelta { .. } => 3,
            _ => 1,
        }
    }
}
