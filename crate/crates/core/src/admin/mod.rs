//! Prompt administration: templates, endpoint client, parsing, the trial
//! store, resumable sessions and offline replay.

pub mod client;
pub mod parse;
pub mod replay;
pub mod session;
pub mod store;
pub mod template;

use thiserror::Error;

pub use client::{
    ChatClient, ChatError, ChatMessage, ChatRequest, ChatResponse, EndpointConfig, HttpChatClient,
    RateLimiter, RetryPolicy,
};
pub use parse::{validate_words, Lexicon, ValidationRules};
pub use replay::{replay, ReplayOptions, TrialScore};
pub use session::{run_session, SessionOptions, SessionPlan, SessionReport};
pub use store::{TestKind, TrialRecord, TrialStatus, TrialStore};
pub use template::PromptKind;

#[derive(Debug, Error)]
pub enum AdminError {
    #[error("template error: {0}")]
    Template(String),
    #[error("trial store: {0}")]
    Store(String),
    #[error("invalid session plan: {0}")]
    Plan(String),
    #[error("session aborted: {0}")]
    Endpoint(#[from] ChatError),
    #[error("replay: {0}")]
    Replay(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
