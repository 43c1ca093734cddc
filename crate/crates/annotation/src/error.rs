use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("{0} not found")]
    NotFound(String),

    #[error("invalid request: {0}")]
    Invalid(String),

    #[error("{0}")]
    Forbidden(String),

    #[error("out of order: {0}")]
    Conflict(String),

    #[error(transparent)]
    Core(#[from] aapl_core::Error),

    #[error("storage: {0}")]
    Storage(String),
}

pub type Result<T, E = AnnotationError> = std::result::Result<T, E>;
