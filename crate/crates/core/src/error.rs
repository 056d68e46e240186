//! Error taxonomy shared by all modules.

use thiserror::Error;

/// Everything that can go wrong inside the model.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A time or index falls outside the valid domain.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// A named preset or resource does not exist.
    #[error("not found: {0}")]
    NotFound(String),

    /// Geometry degenerated (coincident terminals, zero-length vector, ...).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A reference file failed to parse; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn out_of_range(msg: impl Into<String>) -> Self {
        Error::OutOfRange(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateGeometry(msg.into())
    }
}
