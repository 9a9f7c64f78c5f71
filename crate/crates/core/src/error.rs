use thiserror::Error;

/// Errors shared by every layer of the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {0} has zero sum and cannot be normalized")]
    ZeroRow(usize),

    #[error("column {0} has no nonzero entries")]
    ZeroColumn(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for dimension {bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },

    #[error("negative weight {value} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, value: f64 },

    #[error("non-finite weight at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("row {row} sums to {sum}, outside stochastic tolerance {tolerance}")]
    NotStochastic { row: usize, sum: f64, tolerance: f64 },

    #[error("item model has no positive row sum")]
    EmptyModel,

    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),

    #[error("damping factor must lie in (0, 1), got {0}")]
    DampingOutOfRange(f64),

    #[error("bipartite graph is disconnected: component sizes {0:?}")]
    DisconnectedGraph(Vec<usize>),

    #[error("iteration did not converge after {0} iterations")]
    NotConverged(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no interactions survive degree filtering")]
    EmptyAfterFiltering,

    #[error("user {0} has an empty interaction history")]
    ZeroHistory(usize),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("matrix order {order} exceeds dense limit {max_order}")]
    TooLarge { order: usize, max_order: usize },

    #[error("split refers to indices outside the trained model: {0}")]
    IndexMapMismatch(String),

    #[error("bad model file: {0}")]
    BadModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
