use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("signal too short: {samples} samples, need at least {needed}")]
    TooShort { samples: usize, needed: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("window/hop pair does not satisfy constant overlap-add (envelope ripple {ripple:.3e})")]
    NonCola { ripple: f64 },

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("energy decay curve does not decay: {0}")]
    NoDecay(String),

    #[error("singular system after {retries} loading retries")]
    Singular { retries: usize },

    #[error("label {label} out of range for {classes} classes")]
    ClassOutOfRange { label: usize, classes: usize },

    #[error("backward called on a forward pass that recorded no tape")]
    MissingTape,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("tensor file {path}: bad {field}: {detail}")]
    TensorFormat {
        path: PathBuf,
        field: &'static str,
        detail: String,
    },

    #[error("checkpoint parameter `{name}`: {detail}")]
    Checkpoint { name: String, detail: String },

    #[error("wav {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
