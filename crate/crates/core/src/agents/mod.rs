//! Producers of raw intention text. Agents are untrusted: nothing here
//! parses, validates, writes files or appends events.

mod model_service;
mod prompt;
mod scripted;
pub mod scripts;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::playbook::ContextPack;

pub use model_service::{ModelServiceAgent, API_KEY_ENV};
pub use prompt::{render_prompt, NO_EXCERPTS_MARKER};
pub use scripted::{load_script, ScriptEntry, ScriptedAgent};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentBinding {
    Scripted {
        name: String,
        script_path: PathBuf,
    },
    ModelService {
        name: String,
        endpoint: String,
        model: String,
        timeout_secs: u64,
        max_retries: u32,
    },
}

impl AgentBinding {
    pub fn name(&self) -> &str {
        match self {
            AgentBinding::Scripted { name, .. } | AgentBinding::ModelService { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOutput {
    pub raw_text: String,
    pub latency_ms: u64,
    pub attempt: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum DispatchError {
    #[error("script exhausted for task {task_id}")]
    ScriptExhausted { task_id: String },
    #[error("script {path}: {reason}")]
    Script { path: PathBuf, reason: String },
    #[error("model service failed after {attempts} attempt(s): {last_error}")]
    Service { attempts: u32, last_error: String },
}

pub trait Agent {
    fn name(&self) -> &str;
    fn dispatch(&mut self, pack: &ContextPack) -> Result<AgentOutput, DispatchError>;

    /// Called before the first dispatch of a resumed run with the number of
    /// outputs this agent already produced for `task_id`.
    fn resume(&mut self, _task_id: &str, _served: usize) {}
}

/// Instantiates the agent for a binding.
pub fn connect(binding: &AgentBinding) -> Result<Box<dyn Agent>, DispatchError> {
    Ok(match binding {
        AgentBinding::Scripted { name, script_path } => Box::new(ScriptedAgent::from_file(name, script_path)?),
        AgentBinding::ModelService {
            name,
            endpoint,
            model,
            timeout_secs,
            max_retries,
        } => Box::new(ModelServiceAgent::new(
            name,
            endpoint,
            model,
            *timeout_secs,
            *max_retries,
        )),
    })
}
