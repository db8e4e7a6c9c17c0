use std::io;
use std::path::PathBuf;

use fastmu::NmfError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}:{line}: {message}")]
    ConfigLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] NmfError),
    /// Some cells of a roster failed inside their solver; the others ran.
    #[error("{0} cell(s) failed; see errors.csv")]
    CellsFailed(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl BenchError {
    pub fn config(msg: impl Into<String>) -> Self {
        BenchError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for anything the user can fix in the
    /// configuration or inputs, 3 for failures inside a solver, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::ConfigLine { .. } | BenchError::Config(_) => 2,
            BenchError::Solver(
                NmfError::Config(_) | NmfError::Parse { .. } | NmfError::Io { .. },
            ) => 2,
            BenchError::Solver(_) | BenchError::CellsFailed(_) => 3,
            BenchError::Io { .. } | BenchError::Csv { .. } => 1,
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
