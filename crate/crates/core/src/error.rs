use thiserror::Error;

#[derive(Debug, Error)]
pub enum HeatlabError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("image sum truncation: {0}")]
    Truncation(String),
    #[error("configuration mismatch: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("under-resolved: {0}")]
    Resolution(String),
    #[error("undefined chart transition: {0}")]
    Chart(String),
    #[error("aliasing: {0}")]
    Aliasing(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HeatlabError>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(HeatlabError::Parameter(msg.into()))
}
