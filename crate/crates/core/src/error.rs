use std::path::PathBuf;

use hdgnn_autodiff::AutodiffError;
use thiserror::Error;

use crate::graph::NodeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("edge references unknown node `{0}`")]
    DanglingEndpoint(String),
    #[error("edge kind {kind} expects {expected} but got {actual}")]
    KindMismatch {
        kind: &'static str,
        expected: String,
        actual: String,
    },
    #[error("invalid node id {0:?}")]
    InvalidNode(NodeId),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status: 1 configuration, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Autodiff(AutodiffError::InvalidLearningRate(_)) => 1,
            Error::Numeric(_) | Error::Autodiff(AutodiffError::Domain { .. }) => 3,
            _ => 2,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
