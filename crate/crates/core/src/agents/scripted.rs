use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Agent, AgentOutput, DispatchError};
use crate::playbook::ContextPack;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub task_id: String,
    pub raw_text: String,
}

impl ScriptEntry {
    pub fn new(task_id: &str, raw_text: impl Into<String>) -> Self {
        Self {
            task_id: task_id.to_string(),
            raw_text: raw_text.into(),
        }
    }
}

pub fn load_script(path: &Path) -> Result<Vec<ScriptEntry>, DispatchError> {
    let err = |reason: String| DispatchError::Script {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

/// Replays a fixed list of responses, first-in first-out per task.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    name: String,
    queues: BTreeMap<String, VecDeque<String>>,
    served: BTreeMap<String, u32>,
}

impl ScriptedAgent {
    pub fn new(name: &str, entries: Vec<ScriptEntry>) -> Self {
        let mut queues: BTreeMap<String, VecDeque<String>> = BTreeMap::new();
        for e in entries {
            queues.entry(e.task_id).or_default().push_back(e.raw_text);
        }
        Self {
            name: name.to_string(),
            queues,
            served: BTreeMap::new(),
        }
    }

    pub fn from_file(name: &str, path: &Path) -> Result<Self, DispatchError> {
        Ok(Self::new(name, load_script(path)?))
    }

    /// Drops responses already consumed by an earlier process, so a resumed
    /// run continues where the previous one stopped.
    pub fn skip(&mut self, task_id: &str, n: usize) {
        if let Some(q) = self.queues.get_mut(task_id) {
            for _ in 0..n.min(q.len()) {
                q.pop_front();
            }
        }
        *self.served.entry(task_id.to_string()).or_default() += n as u32;
    }

    pub fn remaining(&self, task_id: &str) -> usize {
        self.queues.get(task_id).map_or(0, VecDeque::len)
    }
}

impl Agent for ScriptedAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn resume(&mut self, task_id: &str, served: usize) {
        self.skip(task_id, served);
    }

    fn dispatch(&mut self, pack: &ContextPack) -> Result<AgentOutput, DispatchError> {
        let task_id = &pack.task.task_id;
        let raw_text = self
            .queues
            .get_mut(task_id)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| DispatchError::ScriptExhausted {
                task_id: task_id.clone(),
            })?;
        let n = self.served.entry(task_id.clone()).or_default();
        *n += 1;
        Ok(AgentOutput {
            raw_text,
            latency_ms: 0,
            attempt: 1,
        })
    }
}
