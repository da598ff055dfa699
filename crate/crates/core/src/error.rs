use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix dimension must be at least 1")]
    EmptyMatrix,

    #[error("entry ({row}, {col}) is outside a {n}x{n} matrix")]
    IndexOutOfRange { row: usize, col: usize, n: usize },

    #[error("diagonal entry of column {col} is missing")]
    MissingDiagonal { col: usize },

    #[error("diagonal entry of column {col} is {value}, expected a positive value")]
    NonPositiveDiagonal { col: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("not a permutation of 0..{n}: {reason}")]
    InvalidPermutation { n: usize, reason: &'static str },

    #[error("at least one candidate ordering is required")]
    NoCandidates,

    #[error("inner-task count array is empty")]
    EmptyCounts,

    /// Non-positive pivot; `column` is the index in the original (unpermuted) matrix.
    #[error("matrix is not positive definite: pivot of original column {column} is not positive")]
    NotPositiveDefinite { column: usize },
}
