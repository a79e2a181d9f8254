use std::path::PathBuf;

use thiserror::Error;

use crate::lightfield::Colorspace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing view file for view ({u}, {v}) in {dir}")]
    MissingView { u: usize, v: usize, dir: PathBuf },

    #[error("inconsistent views: {0}")]
    InconsistentViews(String),

    #[error("expected colorspace {expected:?}, found {found:?}")]
    Colorspace {
        expected: Colorspace,
        found: Colorspace,
    },

    #[error("size error: {0}")]
    Size(String),

    #[error("index out of bounds: {0}")]
    Bounds(String),

    #[error("dataset at {0} contains no scenes")]
    EmptyDataset(PathBuf),

    #[error("split error: {0}")]
    Split(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training hit a non-finite loss. The diagnostics file records the
    /// offending batch.
    #[error("training aborted at step {step}: {reason} (diagnostics in {})", diagnostics.display())]
    Abort {
        step: u64,
        reason: String,
        diagnostics: PathBuf,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn size(msg: impl Into<String>) -> Self {
        Error::Size(msg.into())
    }

    pub(crate) fn bounds(msg: impl Into<String>) -> Self {
        Error::Bounds(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
