use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("label error: {0}")]
    Label(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    Symmetry { deviation: f64 },
    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    Unitarity { deviation: f64 },
    #[error("determinant {modulus:.6}·e^(i·{phase:.6}) is not 1")]
    Determinant { modulus: f64, phase: f64 },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("logic error: {0}")]
    Logic(String),
    #[error("problem size {required} exceeds the configured cap {allowed}")]
    SizeCap { required: usize, allowed: usize },
    #[error("factorization breakdown: {0}")]
    Factorization(String),
    #[error("construction failed verification (residual {residual:.3e}): {what}")]
    Construction { what: String, residual: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
