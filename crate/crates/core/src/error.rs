use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("conversion undefined: layer {layer} has zero max activation")]
    ZeroActivation { layer: usize },

    #[error("invalid scale factor {value} at layer {layer}")]
    InvalidScale { layer: usize, value: f64 },

    #[error("negative input intensity {value} at unit {index}")]
    NegativeInput { index: usize, value: f64 },

    #[error("infeasible patches layout: {0}")]
    InfeasiblePatches(String),

    #[error("parse error in {path} at byte offset {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("unknown image shape for vectors of length {0}")]
    UnknownShape(usize),

    #[error("invalid task groups: {0}")]
    InvalidGroups(String),

    #[error("invalid search space: {0}")]
    InvalidSearchSpace(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
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
