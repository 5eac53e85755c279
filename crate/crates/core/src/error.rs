use thiserror::Error;

/// Errors raised by the continuation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate secant: consecutive points coincide")]
    DegenerateSecant,

    #[error("secant parallel to mu-axis; cap K_st_mu")]
    SecantParallelToMu,

    #[error("non-finite derivative at t = {t}")]
    NonFinite { t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
