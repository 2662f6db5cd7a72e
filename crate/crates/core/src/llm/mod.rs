//! Remote text-model backends over a chat-completions HTTP protocol.

mod client;
mod config;
pub mod prompts;
mod remote;
pub mod schema;
pub mod stub;

use thiserror::Error;

pub use client::{ChatClient, Message};
pub use config::RemoteConfig;
pub use remote::{LlmAudit, RemoteController, RemoteObserver, RemotePlanner};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("backend unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("HTTP {0}: {1}")]
    Http(u16, String),
    #[error("unexpected response body: {0}")]
    BadResponse(String),
    #[error("invalid remote config: {0}")]
    Config(String),
    #[error("prompt template: {0}")]
    Template(String),
}
