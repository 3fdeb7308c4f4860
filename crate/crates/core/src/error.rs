use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or weight shapes do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A configuration value is out of its legal range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Text input (XML, pbtxt, JSON) failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    /// A binary container is malformed or fails integrity checks.
    #[error("corrupt container: {0}")]
    Corrupt(String),

    /// A required weight entry is missing or has the wrong shape.
    #[error("weights: {0}")]
    Weights(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::Corrupt(msg.into())
    }
}
