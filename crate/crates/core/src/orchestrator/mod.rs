//! The master: phase state machine, message routing and the episode loop.

mod episode;
mod replay;
mod state;
mod trace;

use thiserror::Error;

pub use episode::{
    code_version, episode_budget, run_episode, Ablations, EpisodeConfig, EpisodeResult,
};
pub use replay::{phase_role, replay, review_trace, ReplayError, ReplayReport};
pub use state::{
    transition, ActionFailure, Event, FailCause, IllegalTransition, MasterState, Phase,
};
pub use trace::{
    parse_trace, read_trace, to_jsonl, write_trace, EndRecord, Envelope, GlobalReflectRecord,
    Payload, ReflectNotice, Role, TraceError, TraceHeader, TraceRecord, TraceView,
};

use crate::memory::MemoryError;
use crate::simworld::SimError;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    IllegalTransition(#[from] IllegalTransition),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}
