use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the matrix layer, the losses, the metrics and the solvers.
#[derive(Debug, Error)]
pub enum NmfError {
    /// Operand shapes do not conform.
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Dimension {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// A value lies outside the domain an operation is defined on
    /// (zero divisor, nonpositive model entry under KL, zero matrix, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid solver or generator configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed matrix text.
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl NmfError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        NmfError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        NmfError::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, NmfError>;
