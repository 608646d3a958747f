use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("system is discrete but a non-integer time was supplied")]
    NonIntegerTime,

    #[error("system is {0}; operation needs the other time domain")]
    WrongTimeDomain(&'static str),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no exact correlation oracle for {0}")]
    UnsupportedSpec(&'static str),

    #[error("numerical procedure did not converge: {0}")]
    NonConvergence(String),

    #[error("insufficient accuracy: {0}")]
    InsufficientAccuracy(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),
}
