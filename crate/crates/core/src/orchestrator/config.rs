use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::agents::AgentBinding;
use crate::clock::format_instant;
use crate::playbook::{Registry, TaskKind};

pub const DEFAULT_AGENT_KEY: &str = "default";
pub const DEFAULT_MAX_REPAIR_ATTEMPTS: u32 = 2;
pub const MAX_REPAIR_ATTEMPTS_LIMIT: u32 = 10;
pub const DEFAULT_CONTEXT_BYTE_BUDGET: u64 = 64 * 1024;
pub const DEFAULT_QUICK_FIX_THRESHOLD: u32 = 3;
pub const DEFAULT_CLOCK_START: &str = "2026-01-01T00:00:00Z";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    System,
    #[default]
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockConfig {
    #[serde(default)]
    pub mode: ClockMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<String>,
}

fn default_repairs() -> u32 {
    DEFAULT_MAX_REPAIR_ATTEMPTS
}
fn default_budget() -> u64 {
    DEFAULT_CONTEXT_BYTE_BUDGET
}
fn default_quick_fix() -> u32 {
    DEFAULT_QUICK_FIX_THRESHOLD
}

/// Run configuration as written by the operator. Relative paths are resolved
/// against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub repo_root: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optional_docs_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry_path: Option<PathBuf>,
    pub agents: Vec<AgentBinding>,
    /// Task kind (or `default`) to agent name.
    pub agent_for_kind: BTreeMap<String, String>,
    #[serde(default = "default_repairs")]
    pub max_repair_attempts: u32,
    #[serde(default = "default_budget")]
    pub context_byte_budget: u64,
    #[serde(default = "default_quick_fix")]
    pub quick_fix_threshold: u32,
    #[serde(default)]
    pub clock: ClockConfig,
}

fn config_error(msg: impl Into<String>) -> OrchestratorError {
    OrchestratorError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path).map_err(|source| OrchestratorError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }

    fn resolve(base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    pub fn repo_root(&self, base: &Path) -> PathBuf {
        Self::resolve(base, &self.repo_root)
    }

    pub fn docs_dir(&self, base: &Path) -> Option<PathBuf> {
        self.optional_docs_dir.as_ref().map(|d| Self::resolve(base, d))
    }

    pub fn load_registry(&self, base: &Path) -> Result<Registry, OrchestratorError> {
        match &self.registry_path {
            Some(p) => Ok(Registry::load(&Self::resolve(base, p))?),
            None => Ok(Registry::shipped()),
        }
    }

    /// Bindings with script paths made absolute.
    pub fn resolved_agents(&self, base: &Path) -> Vec<AgentBinding> {
        self.agents
            .iter()
            .map(|b| match b {
                AgentBinding::Scripted { name, script_path } => AgentBinding::Scripted {
                    name: name.clone(),
                    script_path: Self::resolve(base, script_path),
                },
                other => other.clone(),
            })
            .collect()
    }

    pub fn agent_for(&self, kind: TaskKind) -> Option<&str> {
        self.agent_for_kind
            .get(kind.as_str())
            .or_else(|| self.agent_for_kind.get(DEFAULT_AGENT_KEY))
            .map(String::as_str)
    }

    /// First second of the fixed clock.
    pub fn clock_start(&self) -> Result<chrono::DateTime<chrono::Utc>, OrchestratorError> {
        let s = self.clock.start.as_deref().unwrap_or(DEFAULT_CLOCK_START);
        chrono::DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&chrono::Utc))
            .map_err(|e| config_error(format!("clock.start {s:?}: {e}")))
    }

    /// Timestamp for the event at `sequence`.
    pub fn timestamp(&self, sequence: u64) -> Result<String, OrchestratorError> {
        Ok(match self.clock.mode {
            ClockMode::Fixed => format_instant(self.clock_start()? + chrono::Duration::seconds(sequence as i64)),
            ClockMode::System => format_instant(chrono::Utc::now()),
        })
    }

    /// Checks every invariant that does not depend on the file system.
    pub fn validate_shape(&self) -> Result<(), OrchestratorError> {
        if self.max_repair_attempts == 0 || self.max_repair_attempts > MAX_REPAIR_ATTEMPTS_LIMIT {
            return Err(config_error(format!(
                "max_repair_attempts must be between 1 and {MAX_REPAIR_ATTEMPTS_LIMIT}"
            )));
        }
        if self.context_byte_budget == 0 {
            return Err(config_error("context_byte_budget must be positive"));
        }
        if self.agents.is_empty() {
            return Err(config_error("at least one agent binding is required"));
        }
        let mut names = BTreeSet::new();
        for b in &self.agents {
            let name = b.name();
            if name.trim().is_empty()
                || name == crate::projection::ORCHESTRATOR_ACTOR
                || name == crate::projection::OPERATOR_ACTOR
            {
                return Err(config_error(format!("agent name {name:?} is empty or reserved")));
            }
            if !names.insert(name) {
                return Err(config_error(format!("agent name {name:?} is used twice")));
            }
            if let AgentBinding::ModelService { endpoint, model, .. } = b {
                if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
                    return Err(config_error(format!("agent {name}: endpoint must be an http(s) URL")));
                }
                if model.trim().is_empty() {
                    return Err(config_error(format!("agent {name}: model must be non-empty")));
                }
            }
        }
        let kinds: BTreeSet<&str> = TaskKind::ALL.iter().map(|k| k.as_str()).collect();
        for (kind, agent) in &self.agent_for_kind {
            if kind != DEFAULT_AGENT_KEY && !kinds.contains(kind.as_str()) {
                return Err(config_error(format!("agent_for_kind: unknown task kind {kind:?}")));
            }
            if !names.contains(agent.as_str()) {
                return Err(config_error(format!(
                    "agent_for_kind: {kind} names unknown agent {agent:?}"
                )));
            }
        }
        if let Some(k) = TaskKind::ALL.iter().find(|k| self.agent_for(**k).is_none()) {
            return Err(config_error(format!("no agent bound for task kind {k} and no default")));
        }
        if self.clock.mode == ClockMode::Fixed {
            self.clock_start()?;
        }
        Ok(())
    }

    /// Checks that every referenced path exists.
    pub fn validate_paths(&self, base: &Path) -> Result<(), OrchestratorError> {
        let repo = self.repo_root(base);
        if !repo.is_dir() {
            return Err(config_error(format!("repo_root {} is not a directory", repo.display())));
        }
        if let Some(d) = self.docs_dir(base) {
            if !d.is_dir() {
                return Err(config_error(format!(
                    "optional_docs_dir {} is not a directory",
                    d.display()
                )));
            }
        }
        if let Some(p) = &self.registry_path {
            let p = Self::resolve(base, p);
            if !p.is_file() {
                return Err(config_error(format!("registry_path {} does not exist", p.display())));
            }
        }
        for b in self.resolved_agents(base) {
            if let AgentBinding::Scripted { name, script_path } = b {
                if !script_path.is_file() {
                    return Err(config_error(format!(
                        "agent {name}: script {} does not exist",
                        script_path.display()
                    )));
                }
            }
        }
        Ok(())
    }
}
