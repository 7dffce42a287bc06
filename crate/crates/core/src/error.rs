use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("node does not belong to this tape: {0}")]
    Detached(String),
    #[error("activation is not smooth enough: {0}")]
    NonSmooth(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

pub(crate) fn shape<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::ShapeMismatch(msg.into()))
}
