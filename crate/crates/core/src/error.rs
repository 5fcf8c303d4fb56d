use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("quadrature did not converge on [{a}, {b}] (estimate {value:e}, error {error:e})")]
    Quadrature { a: f64, b: f64, value: f64, error: f64 },

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("truncation target unmet: {0}")]
    Truncation(String),

    #[error("transience check failed: {0}")]
    Recurrent(String),

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("boundary data rejected: {0}")]
    Boundary(String),

    #[error("monte carlo run invalid: {0}")]
    Censored(String),
}

pub type Result<T> = std::result::Result<T, Error>;
