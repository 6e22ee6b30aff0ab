use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("graph is empty")]
    EmptyGraph,
    #[error("node count mismatch: {left} vs {right}")]
    NodeCountMismatch { left: usize, right: usize },
    #[error("cannot split edges: {0}")]
    Split(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value produced by {op} (node {node})")]
    NonFinite { op: &'static str, node: usize },
    #[error("tensor is not recorded on this tape")]
    NotOnTape,
    #[error("node {0} has no positive score and cannot be given an edge")]
    IsolatedNode(usize),
    #[error("requested {requested} edges but only {available} pairs have positive score")]
    NotEnoughPairs { requested: usize, available: usize },
    #[error("labels must contain both classes")]
    SingleClass,
    #[error("degree-preserving rewiring did not converge")]
    RewireFailed,
    #[error("undefined statistic: {0}")]
    Undefined(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
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
