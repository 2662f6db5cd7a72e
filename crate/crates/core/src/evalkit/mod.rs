//! Navigation and reflection metrics, the batch runner and built-in suites.

mod bench;
mod metrics;
pub mod suites;

use thiserror::Error;

pub use bench::{run_bench, Aggregate, BackendFactory, BenchConfig, BenchOutcome, BenchReport, BenchRow};
pub use metrics::{
    failure_class, reflection_metrics, score_episode, spl, EpisodeMetrics, KeyDecision, ReflectCounts,
    ReflectionMetrics, SplRow,
};

use crate::orchestrator::OrchestratorError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid row: {0}")]
    InvalidRow(String),
    #[error("trace corrupt: {0}")]
    TraceCorrupt(String),
    #[error("invalid bench configuration: {0}")]
    InvalidConfig(String),
    #[error("report invariant violated: {0}")]
    InvariantViolated(String),
    #[error(transparent)]
    Episode(#[from] OrchestratorError),
}
