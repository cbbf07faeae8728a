//! Crate-wide error type.
//!
//! Every fallible operation distinguishes "the input is malformed" from "a
//! resource cap was hit" because callers react differently: malformed input is
//! a caller bug, a resource cap is a request to retry with a coarser grid or a
//! larger budget.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Expression text did not parse under the closed dynamics grammar.
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    /// Structurally well-formed input that violates a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Dimension disagreement between components that must match.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A scalar parameter is outside its admissible range.
    #[error("scalar out of range: {0}")]
    Scalar(String),

    /// A hard cap (cell count, residual evaluations, sample budget) was hit.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    /// The requested operation is not defined for this input.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn scalar(msg: impl Into<String>) -> Self {
        Error::Scalar(msg.into())
    }

    pub fn resource(msg: impl Into<String>) -> Self {
        Error::ResourceLimit(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}
