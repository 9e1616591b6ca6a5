//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by alignment, data generation, and I/O operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or dataset shapes do not agree.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// An argument violates a precondition (empty input, non-positive
    /// parameter, marginals that do not sum to one, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A NaN or infinity reached a computation that requires finite data.
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    /// A parameter combination the crate deliberately does not support.
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    /// A numerical routine (SVD, QR) failed to produce a result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed dataset or result file.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
