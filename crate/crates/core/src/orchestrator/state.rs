use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Planning,
    Perception,
    Action,
    Evaluation,
    Reflection,
    Done,
    Failed,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Done | Phase::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailCause {
    Budget,
    PlanEmpty,
    Deadlock,
    PrematureStop,
    Backend(String),
}

impl std::fmt::Display for FailCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailCause::Budget => f.write_str("step budget exhausted"),
            FailCause::PlanEmpty => f.write_str("empty plan"),
            FailCause::Deadlock => f.write_str("deadlock"),
            FailCause::PrematureStop => f.write_str("stop issued before the plan was complete"),
            FailCause::Backend(m) => write!(f, "backend failure: {m}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionFailure {
    Blocked,
    Mismatch,
    Deadlock,
    NoAlternative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    PlanReady { subtasks: usize },
    Observed,
    ActionSucceeded,
    ActionFailed(ActionFailure),
    Verified { done: bool, last: bool },
    EvaluationSkipped,
    Reflected,
    Fail(FailCause),
}

/// Global state owned by the master.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterState {
    pub phase: Phase,
    /// Zero-based index of the active sub-task.
    pub current_index: usize,
    pub plan_len: usize,
}

impl Default for MasterState {
    fn default() -> Self {
        MasterState {
            phase: Phase::Planning,
            current_index: 0,
            plan_len: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal transition: {event:?} in {phase:?}")]
pub struct IllegalTransition {
    pub phase: Phase,
    pub event: Event,
}

/// The master's transition table.
pub fn transition(state: &MasterState, event: &Event) -> Result<MasterState, IllegalTransition> {
    use Phase::*;
    let illegal = || IllegalTransition {
        phase: state.phase,
        event: event.clone(),
    };
    let to = |phase: Phase| MasterState { phase, ..*state };
    match (state.phase, event) {
        (p, Event::Fail(_)) if !p.is_terminal() => Ok(to(Failed)),
        (Planning, Event::PlanReady { subtasks }) if *subtasks > 0 => Ok(MasterState {
            phase: Perception,
            current_index: 0,
            plan_len: *subtasks,
        }),
        (Perception, Event::Observed) => Ok(to(Action)),
        (Action, Event::ActionSucceeded) => Ok(to(Evaluation)),
        (Action, Event::ActionFailed(_)) => Ok(to(Reflection)),
        (Evaluation, Event::Verified { done: true, last }) => {
            let is_last = state.current_index + 1 == state.plan_len;
            match (is_last, last) {
                (true, true) => Ok(MasterState {
                    phase: Done,
                    current_index: state.plan_len,
                    plan_len: state.plan_len,
                }),
                (false, false) => Ok(MasterState {
                    phase: Perception,
                    current_index: state.current_index + 1,
                    ..*state
                }),
                _ => Err(illegal()),
            }
        }
        (
            Evaluation,
            Event::Verified {
                done: false,
                last: false,
            },
        )
        | (Evaluation, Event::EvaluationSkipped) => Ok(to(Perception)),
        (Reflection, Event::Reflected) => Ok(to(Perception)),
        _ => Err(illegal()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(phase: Phase, index: usize, len: usize) -> MasterState {
        MasterState {
            phase,
            current_index: index,
            plan_len: len,
        }
    }

    #[test]
    fn table_rows() {
        let s = transition(
            &at(Phase::Evaluation, 2, 3),
            &Event::Verified {
                done: true,
                last: true,
            },
        )
        .unwrap();
        assert_eq!(s.phase, Phase::Done);
        assert_eq!(
            transition(&at(Phase::Perception, 0, 1), &Event::Observed)
                .unwrap()
                .phase,
            Phase::Action
        );
        let r = transition(
            &at(Phase::Action, 0, 1),
            &Event::ActionFailed(ActionFailure::Blocked),
        )
        .unwrap();
        assert_eq!(r.phase, Phase::Reflection);
        let adv = transition(
            &at(Phase::Evaluation, 0, 3),
            &Event::Verified {
                done: true,
                last: false,
            },
        )
        .unwrap();
        assert_eq!((adv.phase, adv.current_index), (Phase::Perception, 1));
        let retry = transition(
            &at(Phase::Evaluation, 1, 3),
            &Event::Verified {
                done: false,
                last: false,
            },
        )
        .unwrap();
        assert_eq!((retry.phase, retry.current_index), (Phase::Perception, 1));
    }

    #[test]
    fn illegal_rows() {
        assert!(transition(&at(Phase::Planning, 0, 0), &Event::Observed).is_err());
        assert!(transition(
            &at(Phase::Planning, 0, 0),
            &Event::PlanReady { subtasks: 0 }
        )
        .is_err());
        assert!(transition(
            &at(Phase::Evaluation, 0, 3),
            &Event::Verified {
                done: true,
                last: true
            }
        )
        .is_err());
        assert!(transition(&at(Phase::Done, 1, 1), &Event::Fail(FailCause::Budget)).is_err());
        assert!(transition(&at(Phase::Reflection, 0, 1), &Event::ActionSucceeded).is_err());
    }

    #[test]
    fn any_live_phase_can_fail() {
        for p in [
            Phase::Planning,
            Phase::Perception,
            Phase::Action,
            Phase::Evaluation,
            Phase::Reflection,
        ] {
            assert_eq!(
                transition(&at(p, 0, 1), &Event::Fail(FailCause::Budget))
                    .unwrap()
                    .phase,
                Phase::Failed
            );
        }
    }
}
