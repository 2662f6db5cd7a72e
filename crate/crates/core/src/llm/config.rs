use serde::{Deserialize, Serialize};

use super::LlmError;

fn default_key_env() -> String {
    "CONAV_API_KEY".into()
}
fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    1000
}
fn default_history() -> usize {
    10
}

/// Endpoint settings. The API key is read from the named environment variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    /// Base delay of the exponential backoff, in milliseconds.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// History records rendered into prompts.
    #[serde(default = "default_history")]
    pub max_history: usize,
}

impl RemoteConfig {
    pub fn new(base_url: &str, model: &str) -> Self {
        RemoteConfig {
            base_url: base_url.to_string(),
            model: model.to_string(),
            api_key_env: default_key_env(),
            timeout_s: default_timeout(),
            max_retries: default_retries(),
            temperature: 0.0,
            backoff_ms: default_backoff(),
            max_history: default_history(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: String| Err(LlmError::Config(m));
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return bad(format!(
                "base_url must be an http(s) URL (got {:?})",
                self.base_url
            ));
        }
        if self.model.trim().is_empty() {
            return bad("model must not be empty".into());
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return bad(format!(
                "timeout_s must be positive (got {})",
                self.timeout_s
            ));
        }
        if !(self.temperature.is_finite() && (0.0..=2.0).contains(&self.temperature)) {
            return bad(format!(
                "temperature must lie in [0, 2] (got {})",
                self.temperature
            ));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c: RemoteConfig =
            serde_json::from_str(r#"{"base_url":"http://x/v1/","model":"m"}"#).unwrap();
        assert_eq!(c, RemoteConfig::new("http://x/v1/", "m"));
        assert_eq!(c.endpoint(), "http://x/v1/chat/completions");
        assert!(c.validate().is_ok());
        assert!(serde_json::from_str::<RemoteConfig>(
            r#"{"base_url":"http://x","model":"m","api_key":"s"}"#
        )
        .is_err());
        let mut bad = c.clone();
        bad.timeout_s = 0.0;
        assert!(bad.validate().is_err());
    }
}
