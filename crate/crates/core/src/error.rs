use std::path::PathBuf;

use thiserror::Error;

use crate::losses::Surrogate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample batch is empty")]
    EmptyBatch,

    #[error("score function unavailable: {0}")]
    ScoreUnavailable(&'static str),

    #[error("shift operator must be symmetric positive definite")]
    NotPositiveDefinite,

    #[error("shift operator is singular (smallest eigenvalue {0:e})")]
    Singular(f64),

    #[error("surrogate `{0}` is not non-increasing")]
    NotNonIncreasing(Surrogate),

    #[error("need at least 2 replications, got {0}")]
    TooFewReplications(usize),

    #[error(transparent)]
    Data(#[from] DataError),
}

/// Failures while ingesting tabular data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("data file not found: {}", .0.display())]
    Missing(PathBuf),

    #[error("reading {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{}: no data rows", .0.display())]
    Empty(PathBuf),

    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        line: u64,
        column: String,
        value: String,
    },

    #[error("line {line}: label `{value}` is not binary (expected 0/1 or N/P)")]
    NonBinaryLabel { line: u64, value: String },

    #[error("shifted coordinate {index} is outside the feature dimension {dim}")]
    ShiftedCoordinate { index: usize, dim: usize },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
