use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: need 1 <= d < n, got d={d}, n={n}")]
    InvalidDimensions { d: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("frame columns are not orthonormal (max Gram deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("offset is not orthogonal to the plane (max residual {0:e})")]
    OffsetNotOrthogonal(f64),

    #[error("covector is not orthogonal to the plane (max residual {0:e})")]
    CovectorNotOrthogonal(f64),

    #[error("vector must be nonzero")]
    ZeroVector,

    #[error("non-finite entry")]
    NonFinite,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least 2 Monte Carlo samples, got {0}")]
    TooFewSamples(usize),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("quadrature box too small: boundary carries {fraction:e} of the value")]
    BoxTooSmall { fraction: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("malformed grid file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dims(d: usize, n: usize) -> Result<()> {
    if d >= 1 && d < n {
        Ok(())
    } else {
        Err(Error::InvalidDimensions { d, n })
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
