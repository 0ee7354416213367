use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the grasp pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown vocabulary noun {noun:?}; known nouns: {}", .vocabulary.join(", "))]
    UnknownVocabulary { noun: String, vocabulary: Vec<String> },

    #[error("non-finite loss or gradient at batch index {batch_index}")]
    NumericFailure { batch_index: usize },

    #[error("depth map has no valid pixels")]
    EmptyScene,

    #[error("bilinear neighbour of ({x}, {y}) is invalid")]
    NeighborInvalid { x: f64, y: f64 },

    #[error("object {name:?} is wider than the gripper can open")]
    Ungraspable { name: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    /// Usage and input errors map to exit code 2, everything else to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericFailure { .. } => 1,
            _ => 2,
        }
    }
}
