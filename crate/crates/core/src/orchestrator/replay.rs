use std::sync::Arc;

use thiserror::Error;

use super::state::{transition, Event, IllegalTransition, MasterState, Phase};
use super::trace::{Payload, Role, TraceError, TraceRecord, TraceView};
use crate::agents::SubTaskPlan;
use crate::memory::HistoryRecord;
use crate::reflection::{global_reflect, GlobalReflection};
use crate::simworld::{render_ascii, World};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("trace contains an illegal transition: {0}")]
    Illegal(#[from] IllegalTransition),
    #[error("replay diverged at t={t}: {detail}")]
    Divergence { t: u32, detail: String },
    #[error("trace invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub steps: u32,
    pub transitions: usize,
    pub final_phase: Phase,
    /// One ASCII frame per executed step, when rendering was requested.
    pub frames: Vec<String>,
}

/// Sub-agent a phase may exchange envelopes with.
pub fn phase_role(phase: Phase) -> Option<Role> {
    match phase {
        Phase::Planning | Phase::Evaluation => Some(Role::Planner),
        Phase::Perception => Some(Role::Observer),
        Phase::Action | Phase::Done => Some(Role::Controller),
        Phase::Reflection => Some(Role::Memory),
        Phase::Failed => None,
    }
}

/// Re-runs the transition table and the world over a recorded trace.
pub fn replay(records: &[TraceRecord], render: bool) -> Result<ReplayReport, ReplayError> {
    let view = TraceView::new(records)?;
    let header = view.header;

    let mut state = MasterState::default();
    let mut transitions = 0;
    for (from, event, to) in view.transitions() {
        if from != state.phase {
            return Err(ReplayError::Invariant(format!(
                "transition recorded from {from:?} while in {:?}",
                state.phase
            )));
        }
        let next = transition(&state, event)?;
        if next.phase != to {
            return Err(ReplayError::Invariant(format!(
                "{event:?} in {from:?} leads to {:?}, trace says {to:?}",
                next.phase
            )));
        }
        state = next;
        transitions += 1;
    }
    if state.phase != view.end.phase {
        return Err(ReplayError::Invariant(format!(
            "end record says {:?}, transitions end in {:?}",
            view.end.phase, state.phase
        )));
    }

    let mut last_seq = 0;
    for env in view.envelopes() {
        if env.seq <= last_seq {
            return Err(ReplayError::Invariant(format!(
                "envelope seq {} after {last_seq}",
                env.seq
            )));
        }
        last_seq = env.seq;
        let agent = if env.from == Role::Master {
            env.to
        } else {
            env.from
        };
        if phase_role(env.phase) != Some(agent)
            || (env.from != Role::Master && env.to != Role::Master)
        {
            return Err(ReplayError::Invariant(format!(
                "envelope {} routes {:?}->{:?} in {:?}",
                env.seq, env.from, env.to, env.phase
            )));
        }
    }

    let scenario = Arc::new(header.scenario.clone());
    let mut world = World::new(scenario.clone(), header.config.percept, header.seed)
        .map_err(|e| ReplayError::Invariant(format!("scenario in header: {e}")))?;
    let mut frames = vec![];
    for rec in view.history() {
        let t = world.steps();
        if rec.t != t {
            return Err(ReplayError::Divergence {
                t,
                detail: format!("next recorded step is t={}", rec.t),
            });
        }
        if rec.pose != world.pose() {
            return Err(ReplayError::Divergence {
                t,
                detail: format!("recorded pose {:?}, simulated {:?}", rec.pose, world.pose()),
            });
        }
        let r = world
            .step(rec.action)
            .map_err(|e| ReplayError::Divergence {
                t,
                detail: e.to_string(),
            })?;
        if r.pose != rec.pose_after || r.outcome != rec.outcome {
            return Err(ReplayError::Divergence {
                t,
                detail: format!(
                    "{} gave {:?} at {:?}, recorded {:?} at {:?}",
                    rec.action, r.outcome, r.pose, rec.outcome, rec.pose_after
                ),
            });
        }
        if render {
            frames.push(format!(
                "t={} {} -> {:?}\n{}",
                rec.t,
                rec.action,
                r.outcome,
                render_ascii(&scenario, &r.pose)
            ));
        }
    }
    if world.steps() != view.end.steps {
        return Err(ReplayError::Divergence {
            t: world.steps(),
            detail: format!("end record counts {} steps", view.end.steps),
        });
    }
    Ok(ReplayReport {
        steps: world.steps(),
        transitions,
        final_phase: state.phase,
        frames,
    })
}

/// Post-episode review of a recorded trace: rebuilds the plan with its
/// completion steps and runs global reflection over the logged history.
pub fn review_trace(records: &[TraceRecord]) -> Result<GlobalReflection, TraceError> {
    let view = TraceView::new(records)?;
    let header = view.header;
    let instruction = &header.scenario.instruction;
    let mut plan = header
        .config
        .ablations
        .no_planner
        .then(|| SubTaskPlan::new(instruction, vec![(instruction.clone(), instruction.clone())]).ok())
        .flatten();
    let mut verify_t = 0;
    for r in records {
        match r {
            TraceRecord::Envelope(e) => match &e.payload {
                Payload::PlanReply(p) => plan = Some(p.clone()),
                Payload::VerifyReply(_) => verify_t = e.t,
                _ => {}
            },
            TraceRecord::Transition { event: Event::Verified { done: true, .. }, .. } => {
                let p = plan.as_mut().ok_or_else(|| TraceError::Corrupt("verification before any plan".into()))?;
                p.complete_active(verify_t.saturating_sub(1));
            }
            _ => {}
        }
    }
    let history: Vec<HistoryRecord> = view.history().cloned().collect();
    Ok(global_reflect(
        &history,
        plan.as_ref(),
        instruction,
        view.end.phase == Phase::Failed,
        &header.config.global,
    ))
}
