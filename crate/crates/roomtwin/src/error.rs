//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal error: {0}")]
    Signal(String),

    #[error("no arrival above threshold in correlation trace")]
    NoArrival,

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid exchange: negative time of flight ({0:.6} s)")]
    InvalidExchange(f64),

    #[error("render error: {0}")]
    Render(String),

    #[error("estimation error: {0}")]
    Estimate(String),

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("field error: {0}")]
    Field(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("decay never reaches the fit range (insufficient decay)")]
    InsufficientDecay,

    #[error("edit error: {0}")]
    Edit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn signal(msg: impl Into<String>) -> Self {
        Error::Signal(msg.into())
    }
    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
