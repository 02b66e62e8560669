use std::path::PathBuf;

use crate::identity::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("chain link mismatch at height {height}: {detail}")]
    ChainLink { height: u64, detail: String },

    #[error("insufficient approvals: {valid} valid, {required} required")]
    Quorum { valid: usize, required: usize },

    #[error("invalid signature: {0}")]
    Signature(String),

    #[error("malformed block: {0}")]
    Malformed(String),

    #[error("cannot seat committee: {eligible} participants with positive reputation, {required} required")]
    Election { eligible: usize, required: usize },

    #[error("no committee could be seated for {attempts} consecutive attempts at height {height}")]
    ElectionExhausted { height: u64, attempts: u64 },

    #[error("unknown participant {0}")]
    Lookup(NodeId),

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

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
