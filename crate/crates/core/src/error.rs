use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GeniError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GeniError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: file contains no records")]
    EmptyFile { path: PathBuf },

    #[error("unknown node name(s): {}", .0.join(", "))]
    UnknownNodes(Vec<String>),

    #[error("missing feature row for node(s): {}", .0.join(", "))]
    MissingFeatures(Vec<String>),

    #[error("node id {id} out of range (graph has {node_count} nodes)")]
    NodeOutOfRange { id: usize, node_count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("training aborted at epoch {epoch}: {message}")]
    TrainingDiverged { epoch: usize, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl GeniError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GeniError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GeniError::InvalidArgument(msg.into())
    }
}
