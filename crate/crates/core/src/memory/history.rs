use serde::{Deserialize, Serialize};

use super::bank::CauseCategory;
use super::MemoryError;
use crate::geom::{Action, Direction};
use crate::simworld::StepOutcome;
use crate::{MapSnapshot, Point, Pose};

/// Words describing a scene for experience matching: the sub-task target, the
/// free range ahead in whole meters (`ahead3`), then one word per salient
/// landmark joining the view it lies in (from its bearing in degrees) with its
/// name (`frontsofa`).
pub fn scene_words<'a>(
    target: Option<&'a str>,
    front_free: f64,
    seen: impl IntoIterator<Item = (&'a str, f64)>,
) -> Vec<String> {
    let mut words: Vec<String> = target.into_iter().map(String::from).collect();
    words.push(format!("ahead{}", (front_free + 1e-9).floor().max(0.0) as u64));
    words.extend(seen.into_iter().map(|(name, bearing)| view_word(name, bearing)));
    words
}

/// Single token naming `name` together with the view its bearing falls in.
pub fn view_word(name: &str, bearing: f64) -> String {
    let mut w = Direction::from_bearing(bearing).name().to_string();
    w.extend(name.chars().filter(|c| c.is_alphanumeric()));
    w
}

/// A salient entity placed in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientPoint {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub relevant: bool,
}

/// Compact form of the environment description seen before acting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationDigest {
    pub salient: Vec<SalientPoint>,
    pub traversable: Vec<Direction>,
    /// Free range reported ahead, in meters.
    #[serde(default)]
    pub front_free: f64,
}

impl ObservationDigest {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.salient.iter().map(|s| s.name.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReflectKind {
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReflectStage {
    Local,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReflectFlag {
    Conflict,
    Risk,
    Mismatch,
}

/// One local reflection intervention (veto or post-action mismatch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionEvent {
    pub kind: ReflectKind,
    pub stage: ReflectStage,
    pub flag: ReflectFlag,
    pub reason: String,
    pub matched_id: Option<String>,
    pub similarity: Option<f64>,
    /// Action the controller proposed (for a mismatch, the executed one).
    pub proposed: Action,
    /// Substitute actually executed, if any.
    pub executed: Option<Action>,
    pub pose: Pose,
    pub subtask_index: Option<usize>,
}

/// Top-1 bank hit at or above the match threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub entry_id: String,
    pub similarity: f64,
    pub category: CauseCategory,
}

/// Map state at a step: a reference by step index, or the full snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapRecord {
    Full(MapSnapshot),
    Ref {
        step: u32,
        nodes: usize,
        edges: usize,
    },
}

/// One executed world step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub t: u32,
    pub pose: Pose,
    pub action: Action,
    pub outcome: StepOutcome,
    pub pose_after: Pose,
    pub observation: ObservationDigest,
    pub subtask_index: Option<usize>,
    pub subtask_target: Option<String>,
    pub map: MapRecord,
    #[serde(default)]
    pub reflection_events: Vec<ReflectionEvent>,
    /// Local pre-action checks performed for this step.
    #[serde(default)]
    pub checks: u32,
    #[serde(default)]
    pub retrievals: Vec<RetrievalRecord>,
}

impl HistoryRecord {
    pub fn displaced(&self) -> bool {
        !self
            .pose
            .position()
            .approx_eq(&self.pose_after.position(), 1e-9)
    }

    /// Scene words seen before acting; see [`scene_words`].
    pub fn scene_tokens(&self) -> Vec<String> {
        scene_words(
            self.subtask_target.as_deref(),
            self.observation.front_free,
            self.observation.salient.iter().map(|s| {
                let (bearing, _) = self.pose.polar_to(&Point::new(s.x, s.y));
                (s.name.as_str(), bearing)
            }),
        )
    }
}

/// Append-only step log of one episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    records: Vec<HistoryRecord>,
}

impl History {
    pub fn new() -> Self {
        History::default()
    }

    pub fn log(&mut self, record: HistoryRecord) -> Result<(), MemoryError> {
        let expected = self.records.last().map_or(0, |r| r.t + 1);
        if record.t != expected {
            return Err(MemoryError::OutOfOrder {
                expected,
                got: record.t,
            });
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[HistoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryRecord> {
        self.records.last()
    }

    /// The last `n` records.
    pub fn window(&self, n: usize) -> &[HistoryRecord] {
        &self.records[self.records.len().saturating_sub(n)..]
    }
}
