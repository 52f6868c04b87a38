use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite input to {0}")]
    NumericInput(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("label must be 0 or 1, got {0}")]
    Label(f64),

    #[error("degenerate vector: {0}")]
    DegenerateVector(&'static str),

    #[error("lookup out of range: {table} has {rows} rows, requested {index}")]
    Lookup {
        table: String,
        rows: usize,
        index: usize,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss in {stage} at step {step}")]
    NanLoss { stage: String, step: usize },

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("inconsistent data: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the command line front end.
    ///
    /// 1 usage/config, 2 numeric failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NanLoss { .. } | Error::UndefinedMetric(_) | Error::NumericInput(_) => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Checkpoint(_) => 3,
            _ => 1,
        }
    }
}
