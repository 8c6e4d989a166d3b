use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{what} supports at most {limit}, got {got}")]
    Capacity {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("optimization diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_mismatch(
    context: &'static str,
    expected: impl std::fmt::Display,
    got: impl std::fmt::Display,
) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
