//! Boundary contracts for the external capabilities: chat completion,
//! embedding and SQL execution. Each has a deterministic offline double and
//! a live adapter.

pub mod chat;
pub mod embed;
pub mod http;
pub mod sql;

use thiserror::Error;

pub use chat::{
    ChatModel, ChatRequest, ChatResponse, ExtractiveModel, Message, Role, ScriptEntry,
    ScriptedModel, TranscriptEntry, Usage,
};
pub use embed::{Embedder, HashEmbedder, HttpEmbedder, HASH_EMBEDDER_DIM};
pub use http::{HttpChatModel, HttpSettings};
pub use sql::{ResultTable, SqlError, SqlExecutor, SqlValue};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PortError {
    #[error("script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("scripted response {index} expected a request containing {expected:?}")]
    ScriptMismatch { index: usize, expected: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("model refused: {0}")]
    ModelRefusal(String),
    #[error("embedder failure: {0}")]
    Embedder(String),
    #[error("port configuration error: {0}")]
    Config(String),
}

impl PortError {
    /// True for failures of a remote service (as opposed to local scripting
    /// or configuration problems).
    pub fn is_external(&self) -> bool {
        matches!(
            self,
            PortError::Transport(_) | PortError::ModelRefusal(_) | PortError::Embedder(_)
        )
    }
}
