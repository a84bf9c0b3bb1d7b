use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample array")]
    EmptyInput,
    #[error("sample {index} is not finite")]
    NonFiniteSample { index: usize },
    #[error("{name} = {value} is outside the open interval (0, 1)")]
    OutOfDomain { name: &'static str, value: f64 },
    #[error("sample counts differ: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("empty collection of distributions")]
    EmptyCollection,
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("no neighbors found for cell ({row}, {col})")]
    NoNeighbors { row: usize, col: usize },
    #[error("row {row} has no observed cells to validate on")]
    NoObservedCells { row: usize },
    #[error("every candidate threshold failed to find neighbors")]
    AllTrialsFailed,
    #[error("density is zero or not finite at level {level}")]
    DegenerateDensity { level: f64 },
    #[error("instance of size {n} exceeds the enumeration cap {max}")]
    TooLarge { n: usize, max: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("{failed} of {total} trials failed, above the 20% abort threshold")]
    ExperimentAborted { failed: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
