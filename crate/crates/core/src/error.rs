use thiserror::Error;

use crate::operator_scaling::ScaleResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (smallest eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("matrix is not Hermitian (asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is numerically singular (rank {rank} < {dim})")]
    Singular { rank: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("objective evaluation failed: {0}")]
    EvaluationFailure(String),

    #[error("family is empty")]
    EmptyFamily,

    #[error("matrix has no nonzero entry")]
    AllZeroMatrix,

    #[error("{kind} {index} of the matrix is identically zero")]
    ZeroLine { kind: &'static str, index: usize },

    #[error("trace sum is not positive ({0:e})")]
    ZeroTrace(f64),

    #[error("marginal weight {index} is degenerate ({value:e})")]
    DegenerateMarginal { index: usize, value: f64 },

    #[error("scaling did not converge (residual {:e} after {} sweeps)", .0.residual, .0.iters)]
    NonConvergence(Box<ScaleResult>),

    #[error("subspace pair is not annihilated by the operator tuple (max |u^dag A_k v| = {max_entry:e})")]
    NotInSA { max_entry: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
