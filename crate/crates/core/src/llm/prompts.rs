use std::collections::BTreeMap;
use std::fmt::Write;

use super::LlmError;
use crate::agents::{ActRequest, EnvDescription, ObserveRequest, PlanRequest, VerifyRequest};
use crate::memory::HistoryRecord;
use crate::simworld::PerceptTuple;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptRole {
    Plan,
    Observe,
    Verify,
    Decide,
}

impl PromptRole {
    pub fn name(self) -> &'static str {
        match self {
            PromptRole::Plan => "plan",
            PromptRole::Observe => "observe",
            PromptRole::Verify => "verify",
            PromptRole::Decide => "decide",
        }
    }
}

/// System text with `{name}` placeholders plus the reply schema it announces.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub role: PromptRole,
    pub system_text: &'static str,
    pub schema: &'static [(&'static str, &'static str)],
    pub max_history: usize,
}

const PLAN: &str = "You split an indoor navigation instruction into ordered sub-tasks, one per landmark to visit.\n\
Landmarks known in this building: {landmarks}.\n\
Use the landmark names exactly as listed. Reply with a single fenced JSON block of the form {schema}.";

const OBSERVE: &str = "You describe the surroundings of a robot for its current sub-task: {subtask}.\n\
Mark an entity task_relevant when it is what the sub-task is looking for. A direction is traversable only \
when its free range is at least {delta} m. Only mention entities listed in the tables.\n\
Reply with a single fenced JSON block of the form {schema}. summaries holds four strings: front, right, back, left.";

const VERIFY: &str = "You check whether a robot has completed the sub-task: {subtask}.\n\
Estimate progress in [0, 1]; the sub-task is done when progress reaches {tau} and the robot is within {radius} m \
of the target. Reply with a single fenced JSON block of the form {schema}.";

const DECIDE: &str = "You drive a robot on a grid with four actions: MoveForward (one cell), TurnRight90, TurnLeft90, Stop.\n\
Current sub-task: {subtask}. Stop only when told every sub-task is complete.\n\
Reply with a single fenced JSON block of the form {schema}.";

impl PromptTemplate {
    pub fn for_role(role: PromptRole, max_history: usize) -> Self {
        let (system_text, schema): (&'static str, &'static [(&str, &str)]) = match role {
            PromptRole::Plan => (PLAN, &[("subtasks", "[{\"index\": int, \"target\": string, \"description\": string}]")]),
            PromptRole::Observe => (
                OBSERVE,
                &[
                    ("summaries", "[string; 4]"),
                    ("salient", "[{\"name\": string, \"bearing\": number, \"distance\": number, \"task_relevant\": bool}]"),
                    ("traversable_dirs", "[\"Front\" | \"Right\" | \"Back\" | \"Left\"]"),
                ],
            ),
            PromptRole::Verify => (VERIFY, &[("done", "bool"), ("progress", "number")]),
            PromptRole::Decide => (
                DECIDE,
                &[("action", "\"MoveForward\" | \"TurnRight90\" | \"TurnLeft90\" | \"Stop\""), ("justification", "string")],
            ),
        };
        PromptTemplate {
            role,
            system_text,
            schema,
            max_history,
        }
    }

    pub fn schema_text(&self) -> String {
        let fields: Vec<String> = self
            .schema
            .iter()
            .map(|(k, t)| format!("\"{k}\": {t}"))
            .collect();
        format!("{{{}}}", fields.join(", "))
    }

    /// Placeholder names in order of appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut out = vec![];
        let mut rest = self.system_text;
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close)
                    if after[..close]
                        .chars()
                        .all(|c| c.is_ascii_lowercase() || c == '_')
                        && close > 0 =>
                {
                    out.push(&after[..close]);
                    rest = &after[close + 1..];
                }
                _ => rest = after,
            }
        }
        out
    }

    /// Substitutes every placeholder; `schema` is bound automatically.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, LlmError> {
        let mut text = self.system_text.to_string();
        for name in self.placeholders() {
            let value = match name {
                "schema" => self.schema_text(),
                _ => bindings
                    .get(name)
                    .cloned()
                    .ok_or_else(|| LlmError::Template(format!("unbound placeholder {{{name}}}")))?,
            };
            text = text.replace(&format!("{{{name}}}"), &value);
        }
        Ok(text)
    }
}

/// Text table of the four views.
pub fn percept_table(views: &[PerceptTuple]) -> String {
    let mut s =
        String::from("direction | walkable | free range | landmarks | obstacles | context\n");
    for v in views {
        let lms: Vec<String> = v
            .landmarks
            .iter()
            .map(|l| format!("{} ({:.1} deg, {:.2} m)", l.name, l.bearing, l.distance))
            .collect();
        let obs: Vec<String> = v
            .obstacles
            .iter()
            .map(|o| format!("{} ({:.1} deg, {:.2} m)", o.category, o.bearing, o.distance))
            .collect();
        let _ = writeln!(
            s,
            "{} | {} | {:.2} m | {} | {} | {}",
            v.direction,
            if v.traversability.walkable {
                "yes"
            } else {
                "no"
            },
            v.traversability.free_range,
            if lms.is_empty() {
                "-".into()
            } else {
                lms.join("; ")
            },
            if obs.is_empty() {
                "-".into()
            } else {
                obs.join("; ")
            },
            v.context
        );
    }
    s
}

fn scene_text(env: &EnvDescription) -> String {
    let mut s = String::new();
    for (dir, text) in ["front", "right", "back", "left"]
        .iter()
        .zip(&env.summaries)
    {
        let _ = writeln!(s, "{dir}: {text}");
    }
    for e in &env.salient {
        let _ = writeln!(
            s,
            "salient: {} at {:.1} deg, {:.2} m{}",
            e.name,
            e.bearing,
            e.distance,
            if e.task_relevant { " (relevant)" } else { "" }
        );
    }
    let dirs: Vec<&str> = env.traversable_dirs.iter().map(|d| d.name()).collect();
    let _ = writeln!(s, "traversable: {}", dirs.join(", "));
    s
}

fn history_text(history: &[HistoryRecord], max: usize) -> String {
    let mut s = String::new();
    for r in &history[history.len().saturating_sub(max)..] {
        let _ = writeln!(
            s,
            "t={} at ({:.1}, {:.1}, {} deg): {} -> {:?}",
            r.t,
            r.pose.x,
            r.pose.y,
            r.pose.heading.degrees(),
            r.action,
            r.outcome
        );
    }
    if s.is_empty() {
        s.push_str("(none)\n");
    }
    s
}

pub fn plan_prompt(t: &PromptTemplate, req: &PlanRequest) -> Result<(String, String), LlmError> {
    let system = t.render(&BTreeMap::from([("landmarks", req.landmarks.join(", "))]))?;
    Ok((system, format!("Instruction: {}", req.instruction)))
}

pub fn observe_prompt(
    t: &PromptTemplate,
    req: &ObserveRequest,
) -> Result<(String, String), LlmError> {
    let subtask = req
        .subtask
        .as_ref()
        .map_or("none".to_string(), |s| s.description.clone());
    let system = t.render(&BTreeMap::from([
        ("subtask", subtask),
        ("delta", format!("{}", req.delta)),
    ]))?;
    Ok((system, percept_table(&req.views)))
}

pub fn verify_prompt(
    t: &PromptTemplate,
    req: &VerifyRequest,
) -> Result<(String, String), LlmError> {
    let system = t.render(&BTreeMap::from([
        (
            "subtask",
            format!(
                "{} (target: {})",
                req.subtask.description, req.subtask.target
            ),
        ),
        ("tau", format!("{}", req.tau)),
        ("radius", format!("{}", req.radius)),
    ]))?;
    let mut user = format!(
        "Pose: ({:.2}, {:.2}), heading {} deg.\nScene:\n{}History:\n{}",
        req.pose.x,
        req.pose.y,
        req.pose.heading.degrees(),
        scene_text(&req.env),
        history_text(&req.history, t.max_history)
    );
    for lm in &req.landmarks {
        let cells: Vec<String> = lm
            .cells
            .iter()
            .map(|[x, y]| format!("({x:.1}, {y:.1})"))
            .collect();
        let _ = writeln!(user, "landmark {}: {}", lm.name, cells.join(" "));
    }
    let _ = writeln!(user, "Scene diameter: {:.2} m.", req.d_norm);
    for a in &req.advisory {
        let _ = writeln!(user, "Past experience (advisory): {a}");
    }
    Ok((system, user))
}

pub fn decide_prompt(t: &PromptTemplate, req: &ActRequest) -> Result<(String, String), LlmError> {
    let subtask = match (&req.subtask, req.plan_complete) {
        (_, true) => "all sub-tasks are complete; issue Stop".to_string(),
        (Some(s), false) => s.description.clone(),
        (None, false) => "none".to_string(),
    };
    let system = t.render(&BTreeMap::from([("subtask", subtask)]))?;
    let mut user = format!(
        "Pose: ({:.2}, {:.2}), heading {} deg.\nScene:\n{}Map: {} places, {} links, {} known obstacles, {} poses so far.\nHistory:\n{}",
        req.pose.x,
        req.pose.y,
        req.pose.heading.degrees(),
        scene_text(&req.env),
        req.map.nodes.len(),
        req.map.edges.len(),
        req.map.obstacles.len(),
        req.map.trajectory.len(),
        history_text(&req.history, t.max_history)
    );
    for a in &req.advisory {
        let _ = writeln!(user, "Past experience (advisory): {a}");
    }
    Ok((system, user))
}
