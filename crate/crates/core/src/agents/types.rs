use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::geom::{Action, Direction};
use crate::mapper::NodeId;
use crate::memory::{tokenize, HistoryRecord, ObservationDigest, SalientPoint};
use crate::simworld::PerceptTuple;
use crate::{MapSnapshot, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SubTaskStatus {
    #[default]
    Pending,
    Active,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTask {
    /// 1-based position in the plan.
    pub index: usize,
    pub description: String,
    pub target: String,
    #[serde(default)]
    pub status: SubTaskStatus,
    /// World steps executed when the sub-task became active.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<u32>,
    /// Step index after which the sub-task was verified complete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_at: Option<u32>,
}

/// Ordered landmark-centric decomposition of an instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTaskPlan {
    pub instruction: String,
    pub subtasks: Vec<SubTask>,
}

impl SubTaskPlan {
    /// Plan from `(target, description)` pairs; the first sub-task becomes active.
    pub fn new(instruction: &str, items: Vec<(String, String)>) -> Result<Self, AgentError> {
        if items.is_empty() {
            return Err(AgentError::PlanEmpty);
        }
        let subtasks = items
            .into_iter()
            .enumerate()
            .map(|(i, (target, description))| SubTask {
                index: i + 1,
                description,
                target,
                status: if i == 0 {
                    SubTaskStatus::Active
                } else {
                    SubTaskStatus::Pending
                },
                started_at: (i == 0).then_some(0),
                completed_at: None,
            })
            .collect();
        Ok(SubTaskPlan {
            instruction: instruction.to_string(),
            subtasks,
        })
    }

    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }

    /// Zero-based position of the active sub-task.
    pub fn active_index(&self) -> Option<usize> {
        self.subtasks
            .iter()
            .position(|s| s.status == SubTaskStatus::Active)
    }

    pub fn active(&self) -> Option<&SubTask> {
        self.active_index().map(|i| &self.subtasks[i])
    }

    pub fn is_complete(&self) -> bool {
        self.subtasks
            .iter()
            .all(|s| s.status == SubTaskStatus::Done)
    }

    pub fn completed(&self) -> usize {
        self.subtasks
            .iter()
            .filter(|s| s.status == SubTaskStatus::Done)
            .count()
    }

    /// Marks the active sub-task done at step `t` and activates the next one.
    /// Returns true when the whole plan is complete.
    pub fn complete_active(&mut self, t: u32) -> bool {
        if let Some(i) = self.active_index() {
            self.subtasks[i].status = SubTaskStatus::Done;
            self.subtasks[i].completed_at = Some(t);
            if let Some(next) = self.subtasks.get_mut(i + 1) {
                next.status = SubTaskStatus::Active;
                next.started_at = Some(t + 1);
            }
        }
        self.is_complete()
    }

    pub fn targets(&self) -> Vec<String> {
        self.subtasks.iter().map(|s| s.target.clone()).collect()
    }

    /// Exactly one active sub-task unless all are done; indices run 1..=k.
    pub fn is_well_formed(&self) -> bool {
        let active = self
            .subtasks
            .iter()
            .filter(|s| s.status == SubTaskStatus::Active)
            .count();
        let indices_ok = self
            .subtasks
            .iter()
            .enumerate()
            .all(|(i, s)| s.index == i + 1);
        indices_ok && (active == 1 || (active == 0 && self.is_complete()))
    }
}

/// Whether `name` shares a token with `target` (case-insensitive).
pub fn token_overlap(name: &str, target: &str) -> bool {
    let target: Vec<String> = tokenize(target).collect();
    tokenize(name).any(|t| target.contains(&t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Salient {
    pub name: String,
    pub bearing: f64,
    pub distance: f64,
    pub task_relevant: bool,
}

/// Task-oriented description distilled from the four raw views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvDescription {
    /// Front, right, back, left.
    pub summaries: Vec<String>,
    pub salient: Vec<Salient>,
    pub traversable_dirs: Vec<Direction>,
    pub raw_views: Vec<PerceptTuple>,
}

impl EnvDescription {
    pub fn traversable(&self, dir: Direction) -> bool {
        self.traversable_dirs.contains(&dir)
    }

    pub fn front_free_range(&self) -> f64 {
        self.raw_views
            .iter()
            .find(|v| v.direction == Direction::Front)
            .map_or(0.0, |v| v.traversability.free_range)
    }

    /// Every salient entry names something reported in the raw views.
    pub fn salient_grounded(&self) -> bool {
        self.salient.iter().all(|s| {
            self.raw_views.iter().any(|v| {
                v.landmarks.iter().any(|l| l.name == s.name)
                    || v.obstacles.iter().any(|o| o.category == s.name)
            })
        })
    }

    pub fn digest(&self, pose: &Pose) -> ObservationDigest {
        ObservationDigest {
            salient: self
                .salient
                .iter()
                .map(|s| {
                    let p = pose.project(s.bearing, s.distance);
                    SalientPoint {
                        name: s.name.clone(),
                        x: round6(p.x),
                        y: round6(p.y),
                        relevant: s.task_relevant,
                    }
                })
                .collect(),
            traversable: self.traversable_dirs.clone(),
            front_free: self.front_free_range(),
        }
    }
}

fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    pub justification: String,
    #[serde(default)]
    pub candidate_refs: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub done: bool,
    pub progress: f64,
}

/// Known landmark footprint (cell centers in meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkGeometry {
    pub name: String,
    pub cells: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub instruction: String,
    pub landmarks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserveRequest {
    pub views: Vec<PerceptTuple>,
    pub subtask: Option<SubTask>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub subtask: SubTask,
    pub env: EnvDescription,
    pub history: Vec<HistoryRecord>,
    pub pose: Pose,
    pub tau: f64,
    pub landmarks: Vec<LandmarkGeometry>,
    pub d_norm: f64,
    pub radius: f64,
    #[serde(default)]
    pub advisory: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActRequest {
    pub subtask: Option<SubTask>,
    pub plan_complete: bool,
    pub env: EnvDescription,
    pub map: MapSnapshot,
    pub history: Vec<HistoryRecord>,
    pub pose: Pose,
    pub delta: f64,
    #[serde(default)]
    pub advisory: Vec<String>,
}
