use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no target signal: every criterion point was degenerate")]
    NoTargetSignal,

    #[error("insufficient data: {needed} reliable samples needed, {available} available")]
    InsufficientData { needed: usize, available: usize },

    #[error("under-determined system: {0}")]
    UnderDetermined(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
