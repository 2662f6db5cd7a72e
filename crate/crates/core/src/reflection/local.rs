use serde::{Deserialize, Serialize};

use super::ReflectionError;
use crate::agents::{EnvDescription, Salient};
use crate::geom::{Action, Direction};
use crate::memory::{encode_all, scene_words, view_word, Correction, ExperienceBank, ExperienceEntry, FeatureVector};
use crate::simworld::StepOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalFlag {
    Pass,
    Conflict,
    Risk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedExperience {
    pub id: String,
    pub similarity: f64,
    pub a_err: Action,
    pub a_corr: Correction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalVerdict {
    pub flag: LocalFlag,
    pub reason: String,
    pub matched: Option<MatchedExperience>,
}

impl LocalVerdict {
    fn pass() -> Self {
        LocalVerdict {
            flag: LocalFlag::Pass,
            reason: "consistent with the scene".into(),
            matched: None,
        }
    }
}

/// Query vector for the current scene; see [`scene_words`].
pub fn scene_features(target: Option<&str>, env: &EnvDescription) -> FeatureVector {
    let words = scene_words(
        target,
        env.front_free_range(),
        env.salient.iter().map(|s| (s.name.as_str(), s.bearing)),
    );
    encode_all(words.iter().map(String::as_str))
}

/// Salient objects ahead, other than the target, that `entry` names in the
/// same view.
pub fn hazards_ahead<'a>(entry: &ExperienceEntry, env: &'a EnvDescription, target: Option<&str>) -> Vec<&'a Salient> {
    env.salient
        .iter()
        .filter(|s| Direction::from_bearing(s.bearing) == Direction::Front && Some(s.name.as_str()) != target)
        .filter(|s| entry.tokens.get(&view_word(&s.name, s.bearing)) > 0)
        .collect()
}

/// Pre-action check. Conflict when moving forward into a direction the scene
/// reports as not traversable; Risk when a stored failure with the same
/// erroneous action matches the scene above `tau_risk`. A stored forward
/// failure only counts while one of the objects it names is ahead.
pub fn local_check(
    action: Action,
    env: &EnvDescription,
    target: Option<&str>,
    bank: Option<&ExperienceBank>,
    tau_risk: f64,
    delta: f64,
) -> LocalVerdict {
    if action == Action::MoveForward
        && (!env.traversable(Direction::Front) || env.front_free_range() + 1e-9 < delta)
    {
        return LocalVerdict {
            flag: LocalFlag::Conflict,
            reason: format!(
                "front is not traversable (free range {:.1} m)",
                env.front_free_range()
            ),
            matched: None,
        };
    }
    if let Some(best) = bank.and_then(|b| b.best(&scene_features(target, env))) {
        let r = &best.entry.reflective;
        let anchored = action != Action::MoveForward || !hazards_ahead(best.entry, env, target).is_empty();
        if best.score > tau_risk && r.a_err == action && anchored {
            return LocalVerdict {
                flag: LocalFlag::Risk,
                reason: format!(
                    "scene matches past {} failure on {}",
                    r.cause.category, r.a_err
                ),
                matched: Some(MatchedExperience {
                    id: best.entry.id.clone(),
                    similarity: best.score,
                    a_err: r.a_err,
                    a_corr: r.a_corr.clone(),
                }),
            };
        }
    }
    LocalVerdict::pass()
}

fn conflict_substitute(env: &EnvDescription, original: Action) -> Result<Action, ReflectionError> {
    let options: &[(Direction, Action)] = match original {
        Action::MoveForward | Action::Stop => &[
            (Direction::Right, Action::TurnRight90),
            (Direction::Left, Action::TurnLeft90),
            (Direction::Back, Action::TurnRight90),
        ],
        Action::TurnRight90 => &[
            (Direction::Front, Action::MoveForward),
            (Direction::Left, Action::TurnLeft90),
        ],
        Action::TurnLeft90 => &[
            (Direction::Front, Action::MoveForward),
            (Direction::Right, Action::TurnRight90),
        ],
    };
    options
        .iter()
        .find(|(d, _)| env.traversable(*d))
        .map(|(_, a)| *a)
        .ok_or(ReflectionError::NoAlternative)
}

/// Substitute for a vetoed action. Never returns `original`.
pub fn micro_plan(
    verdict: &LocalVerdict,
    env: &EnvDescription,
    original: Action,
) -> Result<Action, ReflectionError> {
    match verdict.flag {
        LocalFlag::Pass => Err(ReflectionError::NothingToVeto),
        LocalFlag::Conflict => conflict_substitute(env, original),
        LocalFlag::Risk => {
            let corr = verdict
                .matched
                .as_ref()
                .filter(|m| m.a_err == original)
                .and_then(|m| m.a_corr.first())
                .filter(|a| *a != original && *a != Action::Stop)
                .filter(|a| *a != Action::MoveForward || env.traversable(Direction::Front));
            match corr {
                Some(a) => Ok(a),
                None => conflict_substitute(env, original),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PostCheck {
    Ok,
    Mismatch,
}

/// Expected Moved but the world reported Blocked.
pub fn post_check(expected: StepOutcome, actual: StepOutcome) -> PostCheck {
    if expected == StepOutcome::Moved && actual == StepOutcome::Blocked {
        PostCheck::Mismatch
    } else {
        PostCheck::Ok
    }
}

/// Outcome the agent's own description predicts for `action`.
pub fn expected_outcome(action: Action, env: &EnvDescription) -> StepOutcome {
    match action {
        Action::MoveForward if env.traversable(Direction::Front) => StepOutcome::Moved,
        Action::MoveForward => StepOutcome::Blocked,
        Action::TurnLeft90 | Action::TurnRight90 => StepOutcome::Turned,
        Action::Stop => StepOutcome::Stopped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::describe_scene;
    use crate::memory::{
        encode, Cause, CauseCategory, ExperienceContext, ExperienceEntry, ReflectiveTuple,
    };
    use crate::simworld::{ObstacleSighting, PerceptTuple, Traversability, WALL};

    fn env(free: [f64; 4]) -> EnvDescription {
        let views: Vec<PerceptTuple> = Direction::ALL
            .iter()
            .map(|d| PerceptTuple {
                direction: *d,
                obstacles: vec![],
                landmarks: vec![],
                traversability: Traversability {
                    walkable: free[d.index()] > 0.0,
                    free_range: free[d.index()],
                },
                context: "open space".into(),
            })
            .collect();
        describe_scene(&views, None, 1.0)
    }

    fn glass_bank() -> ExperienceBank {
        let mut bank = ExperienceBank::new();
        bank.store(ExperienceEntry::new(
            encode("frontglassdoor ahead1 corridor"),
            ExperienceContext::default(),
            ReflectiveTuple {
                f_err_tokens: vec!["frontglassdoor".into(), "ahead1".into(), "corridor".into()],
                a_err: Action::MoveForward,
                cause: Cause {
                    category: CauseCategory::Misperception,
                    text: "glass read as free".into(),
                },
                a_corr: Correction::Action(Action::TurnLeft90),
            },
        ))
        .unwrap();
        bank
    }

    #[test]
    fn obstacle_ahead_conflicts() {
        let mut e = env([0.0, 1.0, 1.0, 1.0]);
        e.raw_views[0].obstacles.push(ObstacleSighting {
            category: WALL.into(),
            bearing: 0.0,
            distance: 1.0,
        });
        let v = local_check(Action::MoveForward, &e, None, None, 0.75, 1.0);
        assert_eq!(v.flag, LocalFlag::Conflict);
        assert_eq!(
            micro_plan(&v, &e, Action::MoveForward),
            Ok(Action::TurnRight90)
        );
    }

    #[test]
    fn rotations_pass() {
        for free in [[0.0; 4], [1.0; 4]] {
            let e = env(free);
            for a in [Action::TurnLeft90, Action::TurnRight90] {
                assert_eq!(
                    local_check(a, &e, None, None, 0.75, 1.0).flag,
                    LocalFlag::Pass
                );
            }
        }
    }

    #[test]
    fn glass_scene_is_risky() {
        let mut e = env([1.0; 4]);
        e.salient.push(crate::agents::Salient {
            name: "glass door".into(),
            bearing: 0.0,
            distance: 1.0,
            task_relevant: false,
        });
        let bank = glass_bank();
        let v = local_check(Action::MoveForward, &e, None, Some(&bank), 0.75, 1.0);
        assert_eq!(v.flag, LocalFlag::Risk);
        let m = v.matched.as_ref().unwrap();
        assert!((m.similarity - 2.0 / 6f64.sqrt()).abs() < 1e-12);
        assert_eq!(
            micro_plan(&v, &e, Action::MoveForward),
            Ok(Action::TurnLeft90)
        );
        // A different proposed action does not match the stored error.
        assert_eq!(
            local_check(Action::TurnRight90, &e, None, Some(&bank), 0.75, 1.0).flag,
            LocalFlag::Pass
        );
        assert_eq!(
            local_check(Action::MoveForward, &e, None, Some(&bank), 0.9, 1.0).flag,
            LocalFlag::Pass
        );
        // Same words, but the door is no longer ahead.
        e.salient[0].bearing = 90.0;
        assert_eq!(
            local_check(Action::MoveForward, &e, None, Some(&bank), 0.1, 1.0).flag,
            LocalFlag::Pass
        );
        // The target itself is never the hazard.
        e.salient[0].bearing = 0.0;
        assert_eq!(
            local_check(Action::MoveForward, &e, Some("glass door"), Some(&bank), 0.1, 1.0).flag,
            LocalFlag::Pass
        );
    }

    #[test]
    fn only_back_open_starts_about_face() {
        let e = env([0.0, 0.0, 1.0, 0.0]);
        let v = local_check(Action::MoveForward, &e, None, None, 0.75, 1.0);
        assert_eq!(
            micro_plan(&v, &e, Action::MoveForward),
            Ok(Action::TurnRight90)
        );
        let boxed = env([0.0; 4]);
        assert_eq!(
            micro_plan(&v, &boxed, Action::MoveForward),
            Err(ReflectionError::NoAlternative)
        );
    }

    #[test]
    fn post_check_table() {
        use StepOutcome::*;
        assert_eq!(post_check(Moved, Moved), PostCheck::Ok);
        assert_eq!(post_check(Moved, Blocked), PostCheck::Mismatch);
        assert_eq!(post_check(Stopped, Stopped), PostCheck::Ok);
        assert_eq!(post_check(Turned, Turned), PostCheck::Ok);
    }

    #[test]
    fn veto_never_returns_original() {
        let bank = glass_bank();
        for mask in 0u8..16 {
            let free = std::array::from_fn(|i| if mask & (1 << i) != 0 { 1.0 } else { 0.0 });
            let mut e = env(free);
            e.salient.push(crate::agents::Salient {
                name: "glass door".into(),
                bearing: 0.0,
                distance: 1.0,
                task_relevant: false,
            });
            for a in Action::ALL {
                let v = local_check(a, &e, None, Some(&bank), 0.75, 1.0);
                if v.flag == LocalFlag::Pass {
                    continue;
                }
                if let Ok(sub) = micro_plan(&v, &e, a) {
                    assert_ne!(sub, a);
                    let again = local_check(sub, &e, None, None, 0.75, 1.0);
                    assert_ne!(again.flag, LocalFlag::Conflict, "mask {mask} action {a}");
                }
            }
        }
    }
}
