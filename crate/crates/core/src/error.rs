use thiserror::Error;

/// Errors raised across the simulator and its solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("selection is empty")]
    EmptySelection,

    #[error("no gradient supplied for device {0}")]
    MissingGradient(usize),

    #[error("device {0} is not part of the matching")]
    UnmatchedDevice(usize),

    #[error("enumeration too large: {count} combinations exceeds limit {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("shared-pool fixture violated: {0}")]
    FixtureViolation(String),

    #[error("no sign change on bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("instance is infeasible")]
    Infeasible,

    #[error("malformed IDX data: {0}")]
    Idx(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
