use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the segmentation library.
#[derive(Debug, Error)]
pub enum SegError {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    #[error("{path}:{line}: {rule}")]
    Parse { path: PathBuf, line: usize, rule: String },

    /// The I/O error is part of the message rather than the error source,
    /// so chained reports do not print it twice.
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = SegError> = std::result::Result<T, E>;

impl SegError {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, rule: impl Into<String>) -> Self {
        SegError::Parse {
            path: path.into(),
            line,
            rule: rule.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SegError::Io {
            path: path.into(),
            cause: source,
        }
    }
}
