use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geom::Action;
use crate::memory::{CauseCategory, HistoryRecord, ReflectFlag};
use crate::num::Real;
use crate::orchestrator::{transition, Event, MasterState, Phase, TraceRecord, TraceView};
use crate::simworld::paths::shortest_visiting_length;
use crate::simworld::{KeyPoint, Scenario, StepOutcome, World};
use crate::Pose;

const EPS: f64 = 1e-9;

/// One success-weighted path length operand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplRow<T> {
    pub success: bool,
    pub length: T,
    pub shortest: T,
}

/// Mean of `S * L* / max(L, L*)` over the rows.
pub fn spl<T: Real>(rows: &[SplRow<T>]) -> Result<T, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut sum = T::zero();
    for r in rows {
        // Also rejects NaN.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(r.shortest > T::zero()) {
            return Err(EvalError::InvalidRow(format!("L* must be positive (got {})", r.shortest.to_f64_lossy())));
        }
        if r.success {
            sum = sum + r.shortest / r.length.max(r.shortest);
        }
    }
    Ok(sum / T::from_usize(rows.len()).expect("row count fits the scalar"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReflectCounts {
    pub checks: u64,
    pub flagged: u64,
    pub confirmed: u64,
    pub rollbacks: u64,
    pub rollback_success: u64,
    pub retrievals: u64,
    pub retrievals_relevant: u64,
}

impl AddAssign for ReflectCounts {
    fn add_assign(&mut self, o: Self) {
        self.checks += o.checks;
        self.flagged += o.flagged;
        self.confirmed += o.confirmed;
        self.rollbacks += o.rollbacks;
        self.rollback_success += o.rollback_success;
        self.retrievals += o.retrievals;
        self.retrievals_relevant += o.retrievals_relevant;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyDecision {
    pub label: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    #[serde(rename = "NL")]
    pub nl: u32,
    #[serde(rename = "NE")]
    pub ne: f64,
    #[serde(rename = "S")]
    pub s: u8,
    #[serde(rename = "oracle_S")]
    pub oracle_s: u8,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_star")]
    pub l_star: f64,
    pub key_decisions: Vec<KeyDecision>,
    pub reflect_counts: ReflectCounts,
}

fn pct(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Reflection ratios in percent; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReflectionMetrics {
    #[serde(rename = "EDR")]
    pub edr: Option<f64>,
    #[serde(rename = "RA")]
    pub ra: Option<f64>,
    #[serde(rename = "RSR")]
    pub rsr: Option<f64>,
    #[serde(rename = "MRA")]
    pub mra: Option<f64>,
}

pub fn reflection_metrics(c: &ReflectCounts) -> ReflectionMetrics {
    ReflectionMetrics {
        edr: pct(c.flagged, c.checks),
        ra: pct(c.confirmed, c.flagged),
        rsr: pct(c.rollback_success, c.rollbacks),
        mra: pct(c.retrievals_relevant, c.retrievals),
    }
}

/// Failure class the simulator knows a scenario exercises.
pub fn failure_class(scenario: &Scenario) -> Option<CauseCategory> {
    scenario.grid.has_glass().then_some(CauseCategory::Misperception)
}

fn within(scenario: &Scenario, pose: &Pose, landmark: &str, radius: f64) -> bool {
    scenario.distance_to_landmark(&pose.position(), landmark).is_some_and(|d| d <= radius + EPS)
}

/// Number of sub-task targets reached in instruction order along `poses`.
fn in_order_progress(scenario: &Scenario, poses: &[Pose], radius: f64) -> usize {
    let mut k = 0;
    for p in poses {
        while k < scenario.subtasks.len() && within(scenario, p, &scenario.subtasks[k], radius) {
            k += 1;
        }
    }
    k
}

fn key_decision(kp: &KeyPoint, scenario: &Scenario, poses: &[Pose], history: &[&HistoryRecord], radius: f64) -> bool {
    let at = |p: &Pose, cell: &[i64; 2]| scenario.cell_of(&p.position()) == Some((cell[1], cell[0]));
    match kp {
        KeyPoint::Reach { landmark, .. } => match scenario.subtasks.iter().position(|s| s == landmark) {
            Some(k) => in_order_progress(scenario, poses, radius) > k,
            None => poses.iter().any(|p| within(scenario, p, landmark, radius)),
        },
        KeyPoint::Exit { cell, heading, .. } => history
            .iter()
            .find(|r| at(&r.pose, cell) && !at(&r.pose_after, cell))
            .is_some_and(|r| r.pose.heading == *heading),
        KeyPoint::Act { cell, expected, .. } => {
            history.iter().find(|r| at(&r.pose, cell)).is_some_and(|r| r.action == *expected)
        }
    }
}

/// Scores a complete trace against its scenario's ground truth.
pub fn score_episode(trace: &[TraceRecord], scenario: &Scenario, radius: f64) -> Result<EpisodeMetrics, EvalError> {
    let view = TraceView::new(trace).map_err(|e| EvalError::TraceCorrupt(e.to_string()))?;
    let history: Vec<&HistoryRecord> = view.history().collect();
    let mut poses = vec![scenario.start];
    for (i, r) in history.iter().enumerate() {
        if r.t as usize != i || r.pose != *poses.last().expect("nonempty") {
            return Err(EvalError::TraceCorrupt(format!("history record {i} does not continue the trajectory")));
        }
        poses.push(r.pose_after);
    }
    if view.end.steps as usize != history.len() {
        return Err(EvalError::TraceCorrupt("end record step count differs from the history".into()));
    }
    let final_pose = *poses.last().expect("nonempty");
    let last_target = scenario.subtasks.last().expect("validated scenario has subtasks");
    let ne = scenario.distance_to_landmark(&final_pose.position(), last_target).expect("validated target");
    let in_order = in_order_progress(scenario, &poses, radius) == scenario.subtasks.len();
    let s = u8::from(in_order && view.end.phase == Phase::Done);
    let oracle_s = u8::from(poses.iter().any(|p| scenario.subtasks.iter().any(|t| within(scenario, p, t, radius))));
    let l = history.iter().map(|r| r.pose.position().distance(&r.pose_after.position())).sum();
    let l_star = shortest_visiting_length(scenario)
        .filter(|l| *l > 0.0)
        .ok_or_else(|| EvalError::InvalidRow("scenario has no positive in-order route".into()))?;
    let key_decisions = scenario
        .key_points
        .iter()
        .map(|kp| KeyDecision { label: kp.label().to_string(), correct: key_decision(kp, scenario, &poses, &history, radius) })
        .collect();

    let mut c = ReflectCounts::default();
    let class = failure_class(scenario);
    for r in &history {
        c.checks += r.checks as u64;
        for e in &r.reflection_events {
            c.flagged += 1;
            let confirmed = match e.flag {
                ReflectFlag::Mismatch => true,
                ReflectFlag::Conflict | ReflectFlag::Risk => {
                    e.proposed == Action::MoveForward
                        && World::counterfactual(scenario, &e.pose, e.proposed) == StepOutcome::Blocked
                }
            };
            c.confirmed += confirmed as u64;
        }
        c.retrievals += r.retrievals.len() as u64;
        c.retrievals_relevant += r.retrievals.iter().filter(|x| Some(x.category) == class).count() as u64;
    }
    let mut state = MasterState::default();
    for (_, event, _) in view.transitions() {
        if let Event::ActionFailed(_) = event {
            c.rollbacks += 1;
            c.rollback_success += (view.end.completed_subtasks > state.current_index) as u64;
        }
        state = transition(&state, event).map_err(|e| EvalError::TraceCorrupt(e.to_string()))?;
    }

    Ok(EpisodeMetrics {
        nl: history.len() as u32,
        ne,
        s,
        oracle_s,
        l,
        l_star,
        key_decisions,
        reflect_counts: c,
    })
}
