use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the localization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("depth value {value} at pixel ({x}, {y}) outside (0, {floor}]")]
    DepthOutOfRange {
        x: usize,
        y: usize,
        value: f32,
        floor: f32,
    },

    #[error("empty patch: no pixel closer than the floor")]
    EmptyPatch,

    #[error("no patches in category {0}")]
    EmptyCategory(String),

    #[error("unknown patch id {0}")]
    UnknownPatch(String),

    #[error("patch {id}: {reason}")]
    CorruptPatch { id: String, reason: String },

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("png: {0}")]
    Png(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Error {
    let context = context.into();
    move |source| Error::Io { context, source }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
