use thiserror::Error;

#[derive(Debug, Error)]
pub enum CombError {
    #[error("invalid irrep label: {0}")]
    InvalidLabel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("internal representation error: {0}")]
    Internal(String),
    #[error("problem too large for this operation: {0}")]
    TooLarge(String),
    #[error("constraint violation: {0}")]
    Infeasible(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CombError>;
