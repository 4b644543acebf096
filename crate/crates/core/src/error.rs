use thiserror::Error;

use crate::model::ModelState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid mesh: {0}")]
    Validation(String),

    #[error("non-conformal mesh: {0}")]
    NonConformal(String),

    #[error("degenerate boundary {kind} between nodes {nodes:?}")]
    DegenerateBoundary { kind: &'static str, nodes: Vec<usize> },

    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),

    #[error("parameter out of bounds: {0}")]
    BoundViolation(String),

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("dense instance has {dim} latent dimensions, cap is {cap}")]
    SizeCap { dim: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("chain failed at iteration {iteration}: {message}")]
    ChainFailure {
        iteration: u64,
        message: String,
        state: Box<ModelState>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that indicate a numerically invalid proposal rather
    /// than a programming or input error.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::BoundViolation(_)
        )
    }
}
