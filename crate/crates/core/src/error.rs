use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("{source_name} line {line}: {message}")]
    Parse {
        source_name: &'static str,
        line: usize,
        message: String,
    },

    #[error("feature row for node `{node}` has {found} values, expected {expected}")]
    FeatureLength {
        node: String,
        expected: usize,
        found: usize,
    },

    #[error("{kind} line {line} references unknown node `{node}`")]
    UnknownNode {
        kind: &'static str,
        line: usize,
        node: String,
    },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("node {0} is isolated")]
    IsolatedNode(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("autodiff: {0}")]
    Autodiff(String),

    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
