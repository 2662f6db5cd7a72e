use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Decision, EnvDescription, Salient, SubTaskPlan, Verification};
use crate::geom::{Action, Direction};
use crate::mapper::NodeId;
use crate::simworld::PerceptTuple;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("no fenced JSON block in reply")]
    NoJsonBlock,
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("schema violation: {0}")]
    Violation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanItem {
    pub index: usize,
    pub target: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanReply {
    pub subtasks: Vec<PlanItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyReply {
    pub done: bool,
    pub progress: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserveReply {
    pub summaries: Vec<String>,
    pub salient: Vec<Salient>,
    pub traversable_dirs: Vec<Direction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecideReply {
    pub action: String,
    pub justification: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_refs: Option<Vec<NodeId>>,
}

/// Contents of the first ``` fenced block, without an optional language tag.
pub fn extract_json_block(raw: &str) -> Option<&str> {
    let start = raw.find("```")? + 3;
    let rest = &raw[start..];
    let end = rest.find("```")?;
    let mut body = &rest[..end];
    if let Some(nl) = body.find('\n') {
        let tag = body[..nl].trim();
        if !tag.is_empty() && tag.chars().all(|c| c.is_ascii_alphanumeric()) {
            body = &body[nl + 1..];
        }
    }
    Some(body.trim())
}

fn typed<T: DeserializeOwned>(raw: &str) -> Result<T, SchemaError> {
    let block = extract_json_block(raw).ok_or(SchemaError::NoJsonBlock)?;
    let value: serde_json::Value =
        serde_json::from_str(block).map_err(|e| SchemaError::InvalidJson(e.to_string()))?;
    serde_json::from_value(value).map_err(|e| SchemaError::Violation(e.to_string()))
}

/// Wraps a reply value in a fenced JSON block.
pub fn fence<T: Serialize>(value: &T) -> String {
    format!(
        "```json\n{}\n```",
        serde_json::to_string(value).expect("reply serializes")
    )
}

/// Validated `(target, description)` pairs; an empty list is returned as-is.
pub fn parse_plan(raw: &str) -> Result<Vec<(String, String)>, SchemaError> {
    let reply: PlanReply = typed(raw)?;
    for (i, item) in reply.subtasks.iter().enumerate() {
        if item.index != i + 1 {
            return Err(SchemaError::Violation(format!(
                "sub-task indices must run 1..k (position {} has {})",
                i + 1,
                item.index
            )));
        }
        if item.target.trim().is_empty() {
            return Err(SchemaError::Violation(format!(
                "sub-task {} has an empty target",
                item.index
            )));
        }
    }
    Ok(reply
        .subtasks
        .into_iter()
        .map(|s| (s.target, s.description))
        .collect())
}

pub fn plan_reply(plan: &SubTaskPlan) -> String {
    fence(&PlanReply {
        subtasks: plan
            .subtasks
            .iter()
            .map(|s| PlanItem {
                index: s.index,
                target: s.target.clone(),
                description: s.description.clone(),
            })
            .collect(),
    })
}

pub fn parse_verify(raw: &str) -> Result<Verification, SchemaError> {
    let r: VerifyReply = typed(raw)?;
    if !(0.0..=1.0).contains(&r.progress) {
        return Err(SchemaError::Violation(format!(
            "progress must lie in [0, 1] (got {})",
            r.progress
        )));
    }
    Ok(Verification {
        done: r.done,
        progress: r.progress,
    })
}

pub fn verify_reply(v: &Verification) -> String {
    fence(&VerifyReply {
        done: v.done,
        progress: v.progress,
    })
}

pub fn parse_observe(raw: &str, views: &[PerceptTuple]) -> Result<EnvDescription, SchemaError> {
    let r: ObserveReply = typed(raw)?;
    if r.summaries.len() != 4 {
        return Err(SchemaError::Violation(format!(
            "expected 4 summaries, got {}",
            r.summaries.len()
        )));
    }
    let env = EnvDescription {
        summaries: r.summaries,
        salient: r.salient,
        traversable_dirs: r.traversable_dirs,
        raw_views: views.to_vec(),
    };
    if let Some(s) = env
        .salient
        .iter()
        .find(|s| !(s.distance.is_finite() && s.distance >= 0.0))
    {
        return Err(SchemaError::Violation(format!(
            "salient {:?} has invalid distance",
            s.name
        )));
    }
    if !env.salient_grounded() {
        return Err(SchemaError::Violation(
            "salient entry not present in the raw views".into(),
        ));
    }
    for d in &env.traversable_dirs {
        let walkable = views
            .iter()
            .any(|v| v.direction == *d && v.traversability.walkable);
        if !walkable {
            return Err(SchemaError::Violation(format!(
                "{d} reported traversable but the view is blocked"
            )));
        }
    }
    Ok(env)
}

pub fn observe_reply(env: &EnvDescription) -> String {
    fence(&ObserveReply {
        summaries: env.summaries.clone(),
        salient: env.salient.clone(),
        traversable_dirs: env.traversable_dirs.clone(),
    })
}

pub fn parse_decide(raw: &str) -> Result<Decision, SchemaError> {
    let r: DecideReply = typed(raw)?;
    let action = Action::parse(&r.action).ok_or_else(|| {
        SchemaError::Violation(format!(
            "action {:?} is not one of MoveForward, TurnRight90, TurnLeft90, Stop",
            r.action
        ))
    })?;
    Ok(Decision {
        action,
        justification: r.justification,
        candidate_refs: r.candidate_refs.unwrap_or_default(),
    })
}

pub fn decide_reply(d: &Decision) -> String {
    fence(&DecideReply {
        action: d.action.name().to_string(),
        justification: d.justification.clone(),
        candidate_refs: Some(d.candidate_refs.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_happy_path_inline_fence() {
        let raw = r#"```{"subtasks":[{"index":1,"target":"printer","description":"find the printer"}]}```"#;
        assert_eq!(
            parse_plan(raw).unwrap(),
            vec![("printer".to_string(), "find the printer".to_string())]
        );
    }

    #[test]
    fn language_tag_and_prose_around() {
        let raw = "Sure.\n```json\n{\"done\": true, \"progress\": 0.9}\n```\nanything";
        assert_eq!(
            parse_verify(raw).unwrap(),
            Verification {
                done: true,
                progress: 0.9
            }
        );
    }

    #[test]
    fn prose_only_is_rejected() {
        assert_eq!(
            parse_plan("go to the printer"),
            Err(SchemaError::NoJsonBlock)
        );
    }

    #[test]
    fn unknown_action_is_rejected() {
        let raw = "```json\n{\"action\":\"RunForward\",\"justification\":\"fast\"}\n```";
        assert!(matches!(parse_decide(raw), Err(SchemaError::Violation(_))));
        for a in Action::ALL {
            let raw = format!(
                "```json\n{{\"action\":\"{}\",\"justification\":\"x\"}}\n```",
                a.name()
            );
            assert_eq!(parse_decide(&raw).unwrap().action, a);
        }
    }

    #[test]
    fn missing_and_extra_fields_are_rejected() {
        assert!(matches!(
            parse_decide("```{\"action\":\"Stop\"}```"),
            Err(SchemaError::Violation(_))
        ));
        assert!(matches!(
            parse_verify("```{\"done\":true}```"),
            Err(SchemaError::Violation(_))
        ));
        assert!(matches!(
            parse_verify("```{\"done\":true,\"progress\":0.5,\"x\":1}```"),
            Err(SchemaError::Violation(_))
        ));
        assert!(matches!(
            parse_verify("```{\"done\":true,\"progress\":1.5}```"),
            Err(SchemaError::Violation(_))
        ));
        assert!(matches!(
            parse_plan(
                "```{\"subtasks\":[{\"index\":1,\"target\":\" \",\"description\":\"\"}]}```"
            ),
            Err(SchemaError::Violation(_))
        ));
        assert!(matches!(
            parse_plan(
                "```{\"subtasks\":[{\"index\":2,\"target\":\"a\",\"description\":\"\"}]}```"
            ),
            Err(SchemaError::Violation(_))
        ));
        assert!(matches!(
            parse_plan("```{not json}```"),
            Err(SchemaError::InvalidJson(_))
        ));
    }

    #[test]
    fn replies_round_trip() {
        let d = Decision {
            action: Action::TurnLeft90,
            justification: "x".into(),
            candidate_refs: vec![NodeId(3)],
        };
        assert_eq!(parse_decide(&decide_reply(&d)).unwrap(), d);
        let v = Verification {
            done: false,
            progress: 0.123456789,
        };
        assert_eq!(parse_verify(&verify_reply(&v)).unwrap(), v);
    }
}
