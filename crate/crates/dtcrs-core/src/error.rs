//! Crate-wide error type.

use crate::model::SummaryTree;
use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input bytes were not well-formed JSON.
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    /// A persisted tree violated the schema; names the offending node.
    #[error("tree schema violation at node `{node}`: {reason}")]
    Schema { node: String, reason: String },

    /// A provider (LLM or embedding backend) failed at the transport level,
    /// after retries were exhausted.
    #[error("provider transport failure: {0}")]
    Transport(String),

    /// A provider returned something that breaks its contract
    /// (e.g. mismatched embedding dimensions).
    #[error("provider contract violation: {0}")]
    ProviderContract(String),

    /// A dataset or input file could not be used.
    #[error("data error: {0}")]
    Data(String),

    /// Tree construction aborted mid-build; carries the layers completed
    /// before the failure.
    #[error("tree build failed during {phase}: {reason}")]
    PartialBuild {
        phase: String,
        reason: String,
        partial: Box<SummaryTree>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn schema(node: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            node: node.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the transport layer (retryable at the call site,
    /// fatal past the gateway).
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            Error::Transport(_) | Error::PartialBuild { .. }
        )
    }
}
