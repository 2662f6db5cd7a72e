use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{LlmError, RemoteConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: "system".into(),
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: "user".into(),
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// Blocking chat-completions client with retry on 5xx and transport errors.
pub struct ChatClient {
    config: RemoteConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    /// Retries spent by the last `complete` call.
    pub last_retries: u32,
}

impl ChatClient {
    pub fn new(config: RemoteConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::debug!(
                "{} not set; sending requests without credentials",
                config.api_key_env
            );
        }
        Ok(ChatClient {
            config,
            agent,
            api_key,
            last_retries: 0,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.config.backoff_ms as f64 * 2f64.powi(retry as i32);
        let jitter = 1.0 + 0.25 * rand::random::<f64>();
        Duration::from_millis((base * jitter) as u64)
    }

    fn attempt(&self, body: &Value) -> Result<String, Attempt> {
        let mut req = self
            .agent
            .post(&self.config.endpoint())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let resp = req
            .send_json(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        match status {
            200..=299 => reply_text(&text).map_err(Attempt::Fatal),
            401 | 403 => Err(Attempt::Fatal(LlmError::Auth(status))),
            500..=599 => Err(Attempt::Retry(format!("HTTP {status}"))),
            _ => Err(Attempt::Fatal(LlmError::Http(
                status,
                text.chars().take(200).collect(),
            ))),
        }
    }

    /// Sends the conversation and returns the first reply's text.
    pub fn complete(&mut self, messages: &[Message]) -> Result<String, LlmError> {
        let body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        self.last_retries = 0;
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1));
                self.last_retries = attempt;
                log::warn!(
                    "retrying {} (attempt {} after: {last})",
                    self.config.endpoint(),
                    attempt + 1
                );
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        Err(LlmError::Unavailable {
            attempts: self.config.max_retries + 1,
            last,
        })
    }
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

fn reply_text(body: &str) -> Result<String, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::BadResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::stub::{StubReply, StubServer};

    fn client(url: &str, retries: u32) -> ChatClient {
        let mut c = RemoteConfig::new(url, "stub");
        c.max_retries = retries;
        c.backoff_ms = 1;
        c.timeout_s = 5.0;
        c.api_key_env = "CONAV_TEST_UNSET_KEY".into();
        ChatClient::new(c).unwrap()
    }

    #[test]
    fn echo_returns_verbatim() {
        let text = "```json\n{\"subtasks\":[]}\n```";
        let server = StubServer::start(vec![StubReply::ok(text)]);
        let mut c = client(&server.url(), 0);
        assert_eq!(c.complete(&[Message::user("hi")]).unwrap(), text);
        let reqs = server.requests();
        assert_eq!(reqs.len(), 1);
        assert_eq!(reqs[0]["model"], "stub");
        assert_eq!(reqs[0]["messages"][0]["role"], "user");
        assert_eq!(reqs[0]["temperature"], 0.0);
    }

    #[test]
    fn retries_server_errors() {
        let server = StubServer::start(vec![
            StubReply::status(500),
            StubReply::status(503),
            StubReply::ok("fine"),
        ]);
        let mut c = client(&server.url(), 3);
        assert_eq!(c.complete(&[Message::user("hi")]).unwrap(), "fine");
        assert_eq!(c.last_retries, 2);
    }

    #[test]
    fn auth_is_not_retried() {
        let server = StubServer::start(vec![StubReply::status(401), StubReply::ok("never")]);
        let mut c = client(&server.url(), 3);
        assert_eq!(c.complete(&[Message::user("hi")]), Err(LlmError::Auth(401)));
        assert_eq!(server.requests().len(), 1);
    }

    #[test]
    fn unreachable_host_gives_up() {
        let port = std::net::TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let mut c = client(&format!("http://127.0.0.1:{port}"), 1);
        match c.complete(&[Message::user("hi")]) {
            Err(LlmError::Unavailable { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("expected Unavailable, got {other:?}"),
        }
    }
}
