//! Sub-agent role contracts and the deterministic scripted backends.

mod scripted;
mod types;

use thiserror::Error;

pub use scripted::{
    describe_direct, describe_scene, landmark_mentions, DirectObserver, FaultInjectingController,
    ScriptedController, ScriptedObserver, ScriptedPlanner, INJECTED_JUSTIFICATION,
};
pub use types::{
    token_overlap, ActRequest, Decision, EnvDescription, LandmarkGeometry, ObserveRequest,
    PlanRequest, Salient, SubTask, SubTaskPlan, SubTaskStatus, Verification, VerifyRequest,
};

use crate::llm::LlmAudit;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("no sub-task could be extracted from the instruction")]
    PlanEmpty,
    #[error("no direction is traversable")]
    Deadlock,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed reply: {0}")]
    MalformedReply(String),
}

/// Task planning role: decomposition and verification mode.
pub trait Planner: Send {
    fn plan(&mut self, req: &PlanRequest) -> Result<SubTaskPlan, AgentError>;
    fn verify(&mut self, req: &VerifyRequest) -> Result<Verification, AgentError>;
    fn drain_audit(&mut self) -> Vec<LlmAudit> {
        Vec::new()
    }
}

/// Observation role: raw views to a task-oriented description.
pub trait Observer: Send {
    fn observe(&mut self, req: &ObserveRequest) -> Result<EnvDescription, AgentError>;
    fn drain_audit(&mut self) -> Vec<LlmAudit> {
        Vec::new()
    }
}

/// Control-execution role: picks one primitive per step.
pub trait Controller: Send {
    fn decide(&mut self, req: &ActRequest) -> Result<Decision, AgentError>;
    fn drain_audit(&mut self) -> Vec<LlmAudit> {
        Vec::new()
    }
}

/// One backend per role, plus a label per role for the trace header.
pub struct Backends {
    pub planner: Box<dyn Planner>,
    pub observer: Box<dyn Observer>,
    pub controller: Box<dyn Controller>,
    pub labels: [String; 3],
}

impl Backends {
    pub fn scripted() -> Self {
        Backends {
            planner: Box::new(ScriptedPlanner),
            observer: Box::new(ScriptedObserver),
            controller: Box::new(ScriptedController),
            labels: ["scripted".into(), "scripted".into(), "scripted".into()],
        }
    }

    pub fn with_controller(mut self, controller: Box<dyn Controller>, label: &str) -> Self {
        self.controller = controller;
        self.labels[2] = label.to_string();
        self
    }

    pub fn describe(&self) -> std::collections::BTreeMap<String, String> {
        ["planner", "observer", "controller"]
            .iter()
            .zip(&self.labels)
            .map(|(r, l)| (r.to_string(), l.clone()))
            .collect()
    }
}
