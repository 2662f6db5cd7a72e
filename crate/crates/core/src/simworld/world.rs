use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::percept::{perceive, PerceptConfig, PerceptTuple};
use super::scenario::{CellXY, Scenario};
use super::SimError;
use crate::geom::{Action, Heading};
use crate::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepOutcome {
    Moved,
    Blocked,
    Turned,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub pose: Pose,
    pub outcome: StepOutcome,
}

/// Mutable episode state over an immutable scenario. Cloning snapshots it.
#[derive(Debug, Clone)]
pub struct World {
    scenario: Arc<Scenario>,
    cell: CellXY,
    heading: Heading,
    stopped: bool,
    steps: u32,
    percept: PerceptConfig,
    rng: ChaCha8Rng,
}

impl World {
    pub fn new(
        scenario: Arc<Scenario>,
        percept: PerceptConfig,
        noise_seed: u64,
    ) -> Result<World, SimError> {
        scenario.validate()?;
        let cell = scenario
            .cell_of(&scenario.start.position())
            .expect("validated start");
        Ok(World {
            heading: scenario.start.heading,
            scenario,
            cell,
            stopped: false,
            steps: 0,
            percept,
            rng: ChaCha8Rng::seed_from_u64(noise_seed),
        })
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn cell(&self) -> CellXY {
        self.cell
    }

    pub fn pose(&self) -> Pose {
        let c = self.scenario.center(self.cell);
        Pose::new(c.x, c.y, self.heading)
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// Executes one primitive. The grid and landmarks are never modified.
    pub fn step(&mut self, action: Action) -> Result<StepResult, SimError> {
        if self.stopped {
            return Err(SimError::EpisodeFinished);
        }
        let outcome = match action {
            Action::MoveForward => {
                let (dx, dy) = self.heading.unit();
                let target = (self.cell.0 + dx, self.cell.1 + dy);
                if self.scenario.grid.passable(target) {
                    self.cell = target;
                    StepOutcome::Moved
                } else {
                    StepOutcome::Blocked
                }
            }
            Action::TurnLeft90 => {
                self.heading = self.heading.left();
                StepOutcome::Turned
            }
            Action::TurnRight90 => {
                self.heading = self.heading.right();
                StepOutcome::Turned
            }
            Action::Stop => {
                self.stopped = true;
                StepOutcome::Stopped
            }
        };
        self.steps += 1;
        Ok(StepResult {
            pose: self.pose(),
            outcome,
        })
    }

    /// Four views (front, right, back, left) from the current pose.
    pub fn perceive(&mut self) -> [PerceptTuple; 4] {
        let pose = self.pose();
        perceive(&self.scenario, &pose, &self.percept, &mut self.rng)
    }

    /// Outcome `action` would have from `pose` on the true grid, without side effects.
    pub fn counterfactual(scenario: &Scenario, pose: &Pose, action: Action) -> StepOutcome {
        match action {
            Action::MoveForward => {
                let Some((x, y)) = scenario.cell_of(&pose.position()) else {
                    return StepOutcome::Blocked;
                };
                let (dx, dy) = pose.heading.unit();
                if scenario.grid.passable((x + dx, y + dy)) {
                    StepOutcome::Moved
                } else {
                    StepOutcome::Blocked
                }
            }
            Action::TurnLeft90 | Action::TurnRight90 => StepOutcome::Turned,
            Action::Stop => StepOutcome::Stopped,
        }
    }
}
