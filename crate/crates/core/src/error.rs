use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("curve domain error: |tau| = {tau} exceeds tau_max = {tau_max}")]
    CurveDomain { tau: f64, tau_max: f64 },

    #[error("inverse map did not converge at cell {cell} (residual {residual:e})")]
    Inversion { cell: usize, residual: f64 },

    #[error("step size {dt:e} exceeds the stability bound {bound:e}")]
    StepSize { dt: f64, bound: f64 },

    #[error("negative density {value:e} at cell {cell} after update")]
    Positivity { cell: usize, value: f64 },

    #[error("no confinement: {0}")]
    NoConfinement(String),

    #[error("domain too small: {0}")]
    DomainTooSmall(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
