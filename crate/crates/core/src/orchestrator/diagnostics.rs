//! Non-authoritative run diagnostics: raw agent outputs, rejections and
//! dispatch failures. Nothing here feeds the state hash.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::agents::ScriptEntry;
use crate::canonical;
use crate::projection::TaskStatus;

pub const DIAGNOSTICS_DIR: &str = "diagnostics";
pub const DISPATCHES_FILE: &str = "dispatches.jsonl";
pub const REJECTIONS_FILE: &str = "rejections.jsonl";
pub const DISPATCH_FAILURES_FILE: &str = "dispatch_failures.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchRecord {
    /// Number of events in the log when the dispatch happened.
    pub log_len: u64,
    pub agent: String,
    pub task_id: String,
    pub raw_text: String,
    pub attempt: u32,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionRecord {
    pub log_len: u64,
    pub agent: String,
    pub task_id: String,
    pub prior_status: TaskStatus,
    pub code: String,
    pub detail: String,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchFailureRecord {
    pub log_len: u64,
    pub agent: String,
    pub task_id: String,
    pub prior_status: TaskStatus,
    pub error: String,
}

/// A failed attempt at the current step of a task, of either kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub log_len: u64,
    pub task_id: String,
    pub note: String,
    pub dispatch: bool,
}

pub struct Diagnostics {
    dir: PathBuf,
    pub dispatches: Vec<DispatchRecord>,
    pub rejections: Vec<RejectionRecord>,
    pub dispatch_failures: Vec<DispatchFailureRecord>,
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, OrchestratorError> {
    match std::fs::read_to_string(path) {
        Ok(text) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display()))))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(source) => Err(OrchestratorError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

fn append_line<T: Serialize>(path: &Path, record: &T) -> Result<(), OrchestratorError> {
    let mut line = canonical::to_canonical_bytes(record)?;
    line.push(b'\n');
    let io = |source| OrchestratorError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    f.write_all(&line).map_err(io)?;
    f.flush().map_err(io)
}

impl Diagnostics {
    pub fn open(run_dir: &Path) -> Result<Self, OrchestratorError> {
        let dir = run_dir.join(DIAGNOSTICS_DIR);
        std::fs::create_dir_all(&dir).map_err(|source| OrchestratorError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            dispatches: read_lines(&dir.join(DISPATCHES_FILE))?,
            rejections: read_lines(&dir.join(REJECTIONS_FILE))?,
            dispatch_failures: read_lines(&dir.join(DISPATCH_FAILURES_FILE))?,
            dir,
        })
    }

    pub fn record_dispatch(&mut self, r: DispatchRecord) -> Result<(), OrchestratorError> {
        append_line(&self.dir.join(DISPATCHES_FILE), &r)?;
        self.dispatches.push(r);
        Ok(())
    }

    pub fn record_rejection(&mut self, r: RejectionRecord) -> Result<(), OrchestratorError> {
        append_line(&self.dir.join(REJECTIONS_FILE), &r)?;
        self.rejections.push(r);
        Ok(())
    }

    pub fn record_dispatch_failure(&mut self, r: DispatchFailureRecord) -> Result<(), OrchestratorError> {
        append_line(&self.dir.join(DISPATCH_FAILURES_FILE), &r)?;
        self.dispatch_failures.push(r);
        Ok(())
    }

    /// Successful dispatches already served to `agent` for `task_id`.
    pub fn served(&self, agent: &str, task_id: &str) -> usize {
        self.dispatches
            .iter()
            .filter(|d| d.agent == agent && d.task_id == task_id)
            .count()
    }

    /// Failures for `task_id` recorded after the log reached `since` events.
    pub fn failures_since(&self, task_id: &str, since: u64) -> Vec<Failure> {
        let mut out: Vec<Failure> = self
            .rejections
            .iter()
            .filter(|r| r.task_id == task_id && r.log_len >= since)
            .map(|r| Failure {
                log_len: r.log_len,
                task_id: r.task_id.clone(),
                note: format!("{}: {}", r.code, r.detail),
                dispatch: false,
            })
            .chain(
                self.dispatch_failures
                    .iter()
                    .filter(|r| r.task_id == task_id && r.log_len >= since)
                    .map(|r| Failure {
                        log_len: r.log_len,
                        task_id: r.task_id.clone(),
                        note: format!("dispatch_failed: {}", r.error),
                        dispatch: true,
                    }),
            )
            .collect();
        out.sort_by_key(|f| f.log_len);
        out
    }
}

/// Script replaying the raw outputs recorded in a run, for one agent name.
pub fn replay_script(run_dir: &Path, agent: &str) -> Result<Vec<ScriptEntry>, OrchestratorError> {
    let records: Vec<DispatchRecord> = read_lines(&run_dir.join(DIAGNOSTICS_DIR).join(DISPATCHES_FILE))?;
    Ok(records
        .into_iter()
        .filter(|r| r.agent == agent)
        .map(|r| ScriptEntry::new(&r.task_id, r.raw_text))
        .collect())
}
