//! Deterministic grid world: ground truth, action execution and percept synthesis.

mod generate;
pub mod paths;
mod percept;
mod render;
mod scenario;
mod world;

use thiserror::Error;

pub use generate::{
    budget_for, generate_scenario, generate_scenario_with, instruction_for, Layout, BUDGET_FACTOR,
    LANDMARK_NAMES,
};
pub use percept::{
    perceive, LandmarkSighting, NoiseConfig, ObstacleSighting, PerceptConfig, PerceptTuple,
    Traversability, GLASS, WALL,
};
pub use render::render_ascii;
pub use scenario::{CellKind, CellXY, Grid, KeyPoint, Landmark, Scenario};
pub use world::{StepOutcome, StepResult, World};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unsatisfiable: {0}")]
    Unsatisfiable(String),
    #[error("io error: {0}")]
    Io(String),
}
