use serde::{Deserialize, Serialize};

use super::client::{ChatClient, Message};
use super::prompts::{
    decide_prompt, observe_prompt, plan_prompt, verify_prompt, PromptRole, PromptTemplate,
};
use super::schema::{parse_decide, parse_observe, parse_plan, parse_verify, SchemaError};
use super::{LlmError, RemoteConfig};
use crate::agents::{
    ActRequest, AgentError, Controller, Decision, EnvDescription, ObserveRequest, Observer,
    PlanRequest, Planner, SubTaskPlan, Verification, VerifyRequest,
};

/// One prompt/reply exchange, kept for the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmAudit {
    pub role: String,
    pub messages: Vec<Message>,
    pub reply: Option<String>,
    pub error: Option<String>,
    pub retries: u32,
}

struct Remote {
    client: ChatClient,
    audits: Vec<LlmAudit>,
}

impl Remote {
    fn new(config: RemoteConfig) -> Result<Self, LlmError> {
        Ok(Remote {
            client: ChatClient::new(config)?,
            audits: vec![],
        })
    }

    fn template(&self, role: PromptRole) -> PromptTemplate {
        PromptTemplate::for_role(role, self.client.config().max_history)
    }

    /// Sends the prompt, parses the reply, and reprompts once with the
    /// validation error on failure.
    fn exchange<T>(
        &mut self,
        role: PromptRole,
        prompt: Result<(String, String), LlmError>,
        parse: impl Fn(&str) -> Result<T, SchemaError>,
    ) -> Result<T, AgentError> {
        let (system, user) = prompt.map_err(|e| AgentError::BackendUnavailable(e.to_string()))?;
        let mut messages = vec![Message::system(system), Message::user(user)];
        let mut last_error = String::new();
        for attempt in 0..2 {
            let result = self.client.complete(&messages);
            let retries = self.client.last_retries;
            let raw = match result {
                Ok(raw) => raw,
                Err(e) => {
                    self.audits.push(LlmAudit {
                        role: role.name().into(),
                        messages,
                        reply: None,
                        error: Some(e.to_string()),
                        retries,
                    });
                    return Err(AgentError::BackendUnavailable(e.to_string()));
                }
            };
            let parsed = parse(&raw);
            self.audits.push(LlmAudit {
                role: role.name().into(),
                messages: messages.clone(),
                reply: Some(raw.clone()),
                error: parsed.as_ref().err().map(ToString::to_string),
                retries,
            });
            match parsed {
                Ok(v) => return Ok(v),
                Err(e) => {
                    last_error = e.to_string();
                    if attempt == 0 {
                        messages.push(Message::assistant(raw));
                        messages.push(Message::user(format!(
                            "Your reply was rejected: {e}. Reply again with exactly one fenced JSON block matching the schema."
                        )));
                    }
                }
            }
        }
        Err(AgentError::MalformedReply(last_error))
    }
}

pub struct RemotePlanner(Remote);
pub struct RemoteObserver(Remote);
pub struct RemoteController(Remote);

impl RemotePlanner {
    pub fn new(config: RemoteConfig) -> Result<Self, LlmError> {
        Remote::new(config).map(Self)
    }
}

impl RemoteObserver {
    pub fn new(config: RemoteConfig) -> Result<Self, LlmError> {
        Remote::new(config).map(Self)
    }
}

impl RemoteController {
    pub fn new(config: RemoteConfig) -> Result<Self, LlmError> {
        Remote::new(config).map(Self)
    }
}

impl Planner for RemotePlanner {
    fn plan(&mut self, req: &PlanRequest) -> Result<SubTaskPlan, AgentError> {
        let prompt = plan_prompt(&self.0.template(PromptRole::Plan), req);
        let items = self.0.exchange(PromptRole::Plan, prompt, parse_plan)?;
        SubTaskPlan::new(&req.instruction, items)
    }

    fn verify(&mut self, req: &VerifyRequest) -> Result<Verification, AgentError> {
        let prompt = verify_prompt(&self.0.template(PromptRole::Verify), req);
        self.0.exchange(PromptRole::Verify, prompt, parse_verify)
    }

    fn drain_audit(&mut self) -> Vec<LlmAudit> {
        std::mem::take(&mut self.0.audits)
    }
}

impl Observer for RemoteObserver {
    fn observe(&mut self, req: &ObserveRequest) -> Result<EnvDescription, AgentError> {
        let prompt = observe_prompt(&self.0.template(PromptRole::Observe), req);
        self.0.exchange(PromptRole::Observe, prompt, |raw| {
            parse_observe(raw, &req.views)
        })
    }

    fn drain_audit(&mut self) -> Vec<LlmAudit> {
        std::mem::take(&mut self.0.audits)
    }
}

impl Controller for RemoteController {
    fn decide(&mut self, req: &ActRequest) -> Result<Decision, AgentError> {
        let prompt = decide_prompt(&self.0.template(PromptRole::Decide), req);
        self.0.exchange(PromptRole::Decide, prompt, parse_decide)
    }

    fn drain_audit(&mut self) -> Vec<LlmAudit> {
        std::mem::take(&mut self.0.audits)
    }
}
