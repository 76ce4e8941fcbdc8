use thiserror::Error;

/// Errors produced by the shadow-tomography toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShadowError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected} entries, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shadow channel not invertible (beta = {beta})")]
    NotInvertible { beta: f64 },

    #[error("superoperator is singular: {0}")]
    Singular(String),

    #[error("invalid channel: {0}")]
    ChannelValidity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, ShadowError>;
