use thiserror::Error;

/// Errors for simplex geometry, transport, encoding and dataset handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid dimension {0}: compositions need at least 2 parts")]
    InvalidDimension(usize),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular covariance in group {group}")]
    SingularCovariance { group: u8 },

    #[error("transport solver failed: {0}")]
    SolverFailure(String),

    #[error("category {0:?} absent from training data")]
    MissingCategory(String),

    #[error("malformed scores at row {row}: {reason}")]
    MalformedScores { row: usize, reason: String },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("type error in column {column:?} at line {line}: {reason}")]
    ColumnType {
        column: String,
        line: usize,
        reason: String,
    },

    #[error("column {0:?} is not binary")]
    NotBinary(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
