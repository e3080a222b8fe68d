use std::io;

use thiserror::Error;

/// Errors produced by every fallible operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument did not hold.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A dataset or model file was malformed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An SGD iterate escaped the `L * kappa / sigma` ball.
    #[error("iterate norm {norm} exceeds certified bound {bound} at step {step}")]
    Certificate { step: u64, norm: f64, bound: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(message: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(message.into()))
}
