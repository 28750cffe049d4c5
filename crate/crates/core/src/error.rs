use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// Variants are grouped by [`ErrorKind`] so callers (the CLI in particular)
/// can map them onto stable exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}:{line}: self-loop on node {node}")]
    SelfLoop {
        path: PathBuf,
        line: usize,
        node: usize,
    },
    #[error("attribute file does not cover node {0}")]
    MissingNode(String),
    #[error("unknown node id {0}")]
    UnknownNode(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error(
        "attribute `{attr}`: node {node} has value `{value}` which the predicate cannot evaluate"
    )]
    Predicate {
        attr: String,
        node: usize,
        value: String,
    },
    #[error("group {group} of attribute `{attr}` is empty")]
    EmptyGroup { attr: String, group: char },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("exact enumeration refused: {edges} edges exceeds the limit of {limit}")]
    TooManyEdges { edges: usize, limit: usize },
    #[error("training diverged (non-finite loss) in {phase} at epoch {epoch}")]
    Diverged { phase: &'static str, epoch: usize },
    #[error("stale activation cache: {0}")]
    StaleCache(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParam(_) | Error::Config(_) | Error::Json(_) => ErrorKind::Config,
            Error::Diverged { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
