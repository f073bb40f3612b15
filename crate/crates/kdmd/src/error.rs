use thiserror::Error;

/// Errors produced by the numerical pipelines.
#[derive(Debug, Error)]
pub enum KdmdError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("model has (near-)degenerate eigenvalues; Vandermonde mode normalization is unavailable")]
    DegenerateSpectrum,

    #[error("input is not mean-centered (relative mean {0:.3e}); apply mean subtraction first")]
    NotCentered(f64),

    #[error("eigenvalue matching failed: {0}")]
    MatchingFailure(String),

    #[error("linear algebra backend failure: {0}")]
    Backend(String),

    #[error("csv parse error: {0}")]
    CsvParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ndarray_linalg::error::LinalgError> for KdmdError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        KdmdError::Backend(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, KdmdError>;
