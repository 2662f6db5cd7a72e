//! Run configuration: built-in defaults, an optional JSON file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use conav_core::agents::{
    Backends, Controller, Observer, Planner, ScriptedController, ScriptedObserver, ScriptedPlanner,
};
use conav_core::llm::{RemoteConfig, RemoteController, RemoteObserver, RemotePlanner};
use conav_core::orchestrator::EpisodeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Scripted,
    Remote,
}

/// Backend per role; `backend` applies to every role without an override.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsConfig {
    pub backend: BackendKind,
    pub planner: Option<BackendKind>,
    pub observer: Option<BackendKind>,
    pub controller: Option<BackendKind>,
}

impl AgentsConfig {
    fn kinds(&self) -> [BackendKind; 3] {
        [self.planner, self.observer, self.controller].map(|k| k.unwrap_or(self.backend))
    }
}

/// Endpoint overrides for individual roles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleEndpoints {
    pub planner: Option<RemoteConfig>,
    pub observer: Option<RemoteConfig>,
    pub controller: Option<RemoteConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<PathBuf>,
    /// Directory of scenario files or a built-in suite name.
    pub scenarios: Option<String>,
    pub agents: AgentsConfig,
    pub remote: Option<RemoteConfig>,
    pub remote_roles: RoleEndpoints,
    pub seed: u64,
    pub repeat: u32,
    pub jobs: usize,
    pub episode: EpisodeConfig,
    pub bank: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: None,
            scenarios: None,
            agents: AgentsConfig::default(),
            remote: None,
            remote_roles: RoleEndpoints::default(),
            seed: 0,
            repeat: 5,
            jobs: 1,
            episode: EpisodeConfig::default(),
            bank: None,
            trace: None,
            report: None,
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// `base` overlaid with the keys present in the JSON file at `path`.
    /// Unknown keys are rejected.
    pub fn layered(base: &RunConfig, path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(base.clone());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let file: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if !file.is_object() {
            bail!("config {} must be a JSON object", path.display());
        }
        let mut value = serde_json::to_value(base).expect("config serializes");
        merge(&mut value, file);
        serde_json::from_value(value).with_context(|| format!("config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.episode.validate().map_err(anyhow::Error::msg)?;
        if self.repeat == 0 {
            bail!("repeat must be at least 1");
        }
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        for (role, kind) in ROLES.iter().zip(self.agents.kinds()) {
            if kind == BackendKind::Remote {
                let remote = self
                    .endpoint(role)
                    .with_context(|| format!("{role} uses the remote backend but no remote endpoint is configured"))?;
                remote.validate().with_context(|| format!("remote endpoint for {role}"))?;
            }
        }
        Ok(())
    }

    fn endpoint(&self, role: &str) -> Option<&RemoteConfig> {
        let specific = match role {
            "planner" => &self.remote_roles.planner,
            "observer" => &self.remote_roles.observer,
            _ => &self.remote_roles.controller,
        };
        specific.as_ref().or(self.remote.as_ref())
    }

    /// Fresh backends as configured. Remote clients do not connect until first use.
    pub fn backends(&self) -> Result<Backends, String> {
        let [p, o, c] = self.agents.kinds();
        let remote = |role: &str| -> Result<RemoteConfig, String> {
            self.endpoint(role).cloned().ok_or_else(|| format!("no remote endpoint for {role}"))
        };
        let label = |role: &str, kind: BackendKind| match kind {
            BackendKind::Scripted => "scripted".to_string(),
            BackendKind::Remote => {
                format!("remote:{}", self.endpoint(role).map_or("?", |r| r.model.as_str()))
            }
        };
        let planner: Box<dyn Planner> = match p {
            BackendKind::Scripted => Box::new(ScriptedPlanner),
            BackendKind::Remote => {
                Box::new(RemotePlanner::new(remote("planner")?).map_err(|e| e.to_string())?)
            }
        };
        let observer: Box<dyn Observer> = match o {
            BackendKind::Scripted => Box::new(ScriptedObserver),
            BackendKind::Remote => {
                Box::new(RemoteObserver::new(remote("observer")?).map_err(|e| e.to_string())?)
            }
        };
        let controller: Box<dyn Controller> = match c {
            BackendKind::Scripted => Box::new(ScriptedController),
            BackendKind::Remote => {
                Box::new(RemoteController::new(remote("controller")?).map_err(|e| e.to_string())?)
            }
        };
        Ok(Backends {
            planner,
            observer,
            controller,
            labels: [label("planner", p), label("observer", o), label("controller", c)],
        })
    }
}

const ROLES: [&str; 3] = ["planner", "observer", "controller"];

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn file_overrides_only_present_keys() {
        let f = write(r#"{"seed": 9, "episode": {"tau": 0.6}}"#);
        let c = RunConfig::layered(&RunConfig::default(), Some(f.path())).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.episode.tau, 0.6);
        assert_eq!(c.episode.tau_risk, EpisodeConfig::default().tau_risk);
        assert_eq!(c.repeat, 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [r#"{"sede": 1}"#, r#"{"episode": {"tua": 0.5}}"#, r#"{"agents": {"mapper": "remote"}}"#] {
            let f = write(text);
            assert!(RunConfig::layered(&RunConfig::default(), Some(f.path())).is_err(), "{text}");
        }
    }

    #[test]
    fn remote_role_needs_endpoint() {
        let mut c = RunConfig::default();
        c.agents.controller = Some(BackendKind::Remote);
        assert!(c.validate().is_err());
        c.remote = Some(RemoteConfig::new("http://127.0.0.1:9", "m"));
        c.validate().unwrap();
        let b = c.backends().unwrap();
        assert_eq!(b.labels, ["scripted", "scripted", "remote:m"].map(String::from));
    }

    #[test]
    fn range_checks() {
        let c = RunConfig { repeat: 0, ..RunConfig::default() };
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.episode.tau = 1.5;
        assert!(c.validate().is_err());
    }
}
