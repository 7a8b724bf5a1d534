use thiserror::Error;

/// Errors produced by circuit construction, queries and learning.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation contract (mismatched caps, bad
    /// dimensions, out-of-range indices, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An operation refused its input (structural precondition failed,
    /// enumeration limit exceeded, degenerate kernel, ...).
    #[error("refused: {0}")]
    Refused(String),

    /// A file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A numeric computation produced a nonfinite or inconsistent value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn refused(msg: impl Into<String>) -> Self {
        Error::Refused(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
