use thiserror::Error;

use crate::cholesky::CholeskyError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("degree {p} out of range (maximum {max})")]
    DegreeOutOfRange { p: usize, max: usize },
    #[error("exponential overflow: |phi| = {value} exceeds 300, rescale the weight field")]
    Overflow { value: f64 },
    #[error("no convergence after {iterations} iterations, best residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("requested {requested} eigenvalues but the subspace has dimension {available}")]
    TooMany { requested: usize, available: usize },
    #[error("problem of dimension {dim} exceeds the dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },
    #[error(transparent)]
    Cholesky(#[from] CholeskyError),
    #[error("dense linear algebra failure: {0}")]
    Lapack(String),
    #[error("cochain is not exact: distance to range {distance:e}")]
    NotExact { distance: f64 },
    #[error("cochain is not closed: |Dz| = {norm:e}")]
    NotClosed { norm: f64 },
    #[error("gap hypothesis violated: {0}")]
    GapViolated(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Lapack(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
