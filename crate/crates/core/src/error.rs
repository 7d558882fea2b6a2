use std::io;

use crate::ids::{PhaseIdx, SequenceId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Error taxonomy shared by every module.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration is inconsistent; every problem found is listed.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("training error: {0}")]
    Training(String),

    /// No sequence (or cluster) is left to serve predictions.
    #[error("service unavailable: no surviving model")]
    ServiceUnavailable,

    /// A persisted artifact failed to parse or is internally inconsistent.
    #[error("corrupt artifact: {0}")]
    Corrupt(String),

    #[error("exactness audit failed at sequence {sequence}, phase {phase}")]
    AuditMismatch {
        sequence: SequenceId,
        phase: PhaseIdx,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }
}
