//! Deterministic reconstruction of audit state from the event log.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical;
use crate::event_store::{self, ChainReport, Event, EventKind};
use crate::playbook::Registry;
use crate::risk::CheckResult;
pub use crate::risk::RecordedFinding;

/// Actor id used for events the orchestrator emits on its own authority.
pub const ORCHESTRATOR_ACTOR: &str = "orchestrator";
/// Actor id used for operator commands.
pub const OPERATOR_ACTOR: &str = "operator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Todo,
    InProgress,
    Done,
    Blocked,
}

impl TaskStatus {
    pub const ALL: [TaskStatus; 4] = [
        TaskStatus::Todo,
        TaskStatus::InProgress,
        TaskStatus::Done,
        TaskStatus::Blocked,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Done | TaskStatus::Blocked)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Todo => "todo",
            TaskStatus::InProgress => "in_progress",
            TaskStatus::Done => "done",
            TaskStatus::Blocked => "blocked",
        }
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub status: TaskStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<String>,
    pub phase: u8,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub written_by_task: String,
    pub event_sequence: u64,
    pub sha256: String,
    pub bytes: u64,
}

/// Last admitted result for a registry check (or task verification check).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub task_id: String,
    pub event_sequence: u64,
    pub result: CheckResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditState {
    pub tasks: BTreeMap<String, TaskView>,
    pub current_phase: u8,
    pub findings: Vec<RecordedFinding>,
    pub artifacts: BTreeMap<String, ArtifactEntry>,
    pub checks: BTreeMap<String, CheckOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_sequence: Option<u64>,
    pub state_hash: String,
}

/// Everything in the state that the hash covers.
#[derive(Serialize)]
struct HashedState<'a> {
    tasks: &'a BTreeMap<String, TaskView>,
    current_phase: u8,
    findings: &'a [RecordedFinding],
    artifacts: &'a BTreeMap<String, ArtifactEntry>,
    checks: &'a BTreeMap<String, CheckOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    last_sequence: Option<u64>,
}

impl AuditState {
    /// State before any event: every task todo, phase 1.
    pub fn initial(registry: &Registry) -> Self {
        let tasks = registry
            .tasks()
            .iter()
            .map(|t| {
                (
                    t.task_id.clone(),
                    TaskView {
                        task_id: t.task_id.clone(),
                        status: TaskStatus::Todo,
                        owner: None,
                        phase: t.phase,
                        kind: t.kind.as_str().to_string(),
                        block_reason: None,
                    },
                )
            })
            .collect();
        let mut state = Self {
            tasks,
            current_phase: 1,
            findings: Vec::new(),
            artifacts: BTreeMap::new(),
            checks: BTreeMap::new(),
            last_sequence: None,
            state_hash: String::new(),
        };
        state.rehash();
        state
    }

    pub fn compute_hash(&self) -> String {
        let view = HashedState {
            tasks: &self.tasks,
            current_phase: self.current_phase,
            findings: &self.findings,
            artifacts: &self.artifacts,
            checks: &self.checks,
            last_sequence: self.last_sequence,
        };
        canonical::digest(&view).expect("audit state is canonically encodable")
    }

    fn rehash(&mut self) {
        self.state_hash = self.compute_hash();
    }

    pub fn task(&self, id: &str) -> Option<&TaskView> {
        self.tasks.get(id)
    }

    pub fn status_of(&self, id: &str) -> Option<TaskStatus> {
        self.tasks.get(id).map(|t| t.status)
    }

    pub fn all_terminal(&self) -> bool {
        self.tasks.values().all(|t| t.status.is_terminal())
    }

    pub fn phase_terminal(&self, phase: u8) -> bool {
        self.tasks
            .values()
            .filter(|t| t.phase == phase)
            .all(|t| t.status.is_terminal())
    }

    pub fn count_status(&self, status: TaskStatus) -> usize {
        self.tasks.values().filter(|t| t.status == status).count()
    }

    pub fn blocked_tasks(&self) -> impl Iterator<Item = &TaskView> {
        self.tasks.values().filter(|t| t.status == TaskStatus::Blocked)
    }

    /// Artifacts produced by one task, by path.
    pub fn artifacts_of<'a>(&'a self, task_id: &'a str) -> impl Iterator<Item = (&'a String, &'a ArtifactEntry)> + 'a {
        self.artifacts.iter().filter(move |(_, a)| a.written_by_task == task_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("event {sequence} ({kind}): {reason}")]
pub struct ProjectionError {
    pub sequence: u64,
    pub kind: EventKind,
    pub reason: String,
}

fn payload_field<'a>(event: &'a Event, key: &str) -> Result<&'a Value, ProjectionError> {
    event.payload.get(key).ok_or_else(|| ProjectionError {
        sequence: event.sequence,
        kind: event.kind,
        reason: format!("payload is missing {key:?}"),
    })
}

fn payload_string<'a>(event: &'a Event, key: &str) -> Result<&'a str, ProjectionError> {
    payload_field(event, key)?.as_str().ok_or_else(|| ProjectionError {
        sequence: event.sequence,
        kind: event.kind,
        reason: format!("payload field {key:?} must be a string"),
    })
}

fn payload_typed<T: serde::de::DeserializeOwned>(event: &Event, key: &str) -> Result<T, ProjectionError> {
    serde_json::from_value(payload_field(event, key)?.clone()).map_err(|e| ProjectionError {
        sequence: event.sequence,
        kind: event.kind,
        reason: format!("payload field {key:?}: {e}"),
    })
}

/// Folds events into audit state.
pub fn project(events: &[Event], registry: &Registry) -> Result<AuditState, ProjectionError> {
    let mut state = AuditState::initial(registry);
    for event in events {
        apply(&mut state, event, registry)?;
    }
    state.rehash();
    Ok(state)
}

fn apply(state: &mut AuditState, event: &Event, registry: &Registry) -> Result<(), ProjectionError> {
    let fail = |reason: String| ProjectionError {
        sequence: event.sequence,
        kind: event.kind,
        reason,
    };
    let task_of = |state: &AuditState| -> Result<String, ProjectionError> {
        let id = payload_string(event, "task_id")?;
        if state.tasks.contains_key(id) {
            Ok(id.to_string())
        } else {
            Err(fail(format!("unknown task id {id}")))
        }
    };

    match event.kind {
        EventKind::RunInitialized => {
            if event.sequence != 0 {
                return Err(fail("run_initialized must be the first event".into()));
            }
        }
        EventKind::VerificationRecorded => return Ok(()),
        EventKind::TaskClaimed => {
            let id = task_of(state)?;
            let phase = state.current_phase;
            let view = state.tasks.get_mut(&id).unwrap();
            if view.status != TaskStatus::Todo || view.phase != phase {
                return Err(fail(format!(
                    "cannot claim {id} in status {} (phase {})",
                    view.status, view.phase
                )));
            }
            view.status = TaskStatus::InProgress;
            view.owner = Some(event.actor.clone());
        }
        EventKind::FindingRecorded => {
            let id = task_of(state)?;
            require_owned_in_progress(state, &id, &event.actor).map_err(fail)?;
            let finding: CheckResult = payload_typed(event, "finding")?;
            if registry.check(&finding.check_id).is_none() {
                return Err(fail(format!("unknown check id {}", finding.check_id)));
            }
            state.findings.push(RecordedFinding {
                event_sequence: event.sequence,
                task_id: id,
                finding,
            });
        }
        EventKind::ArtifactWritten => {
            let id = task_of(state)?;
            require_owned_in_progress(state, &id, &event.actor).map_err(fail)?;
            let path = payload_string(event, "path")?.to_string();
            let sha256 = payload_string(event, "sha256")?.to_string();
            let bytes: u64 = payload_typed(event, "bytes")?;
            if let Some(existing) = state.artifacts.get(&path) {
                if existing.written_by_task != id {
                    return Err(fail(format!("{path} already written by {}", existing.written_by_task)));
                }
            }
            state.artifacts.insert(
                path,
                ArtifactEntry {
                    written_by_task: id,
                    event_sequence: event.sequence,
                    sha256,
                    bytes,
                },
            );
        }
        EventKind::TaskCompleted => {
            let id = task_of(state)?;
            require_owned_in_progress(state, &id, &event.actor).map_err(fail)?;
            let checks: Vec<CheckResult> = payload_typed(event, "checks")?;
            let artifacts: Vec<String> = payload_typed(event, "artifacts")?;
            for path in &artifacts {
                match state.artifacts.get(path) {
                    Some(a) if a.written_by_task == id => {}
                    _ => return Err(fail(format!("completion lists unindexed artifact {path}"))),
                }
            }
            let task = registry.task(&id).expect("state tasks mirror the registry");
            let allowed = registry.required_check_ids(task);
            for result in checks {
                if !allowed.contains(&result.check_id) {
                    return Err(fail(format!("check {} is not part of task {id}", result.check_id)));
                }
                state.checks.insert(
                    result.check_id.clone(),
                    CheckOutcome {
                        task_id: id.clone(),
                        event_sequence: event.sequence,
                        result,
                    },
                );
            }
            state.tasks.get_mut(&id).unwrap().status = TaskStatus::Done;
        }
        EventKind::TaskBlocked => {
            let id = task_of(state)?;
            let reason = payload_string(event, "reason")?.to_string();
            let view = state.tasks.get_mut(&id).unwrap();
            let authorized = match view.status {
                TaskStatus::InProgress => {
                    view.owner.as_deref() == Some(event.actor.as_str()) || event.actor == ORCHESTRATOR_ACTOR
                }
                TaskStatus::Todo => event.actor == ORCHESTRATOR_ACTOR,
                TaskStatus::Done | TaskStatus::Blocked => false,
            };
            if !authorized {
                return Err(fail(format!(
                    "{} cannot block {id} in status {}",
                    event.actor, view.status
                )));
            }
            view.status = TaskStatus::Blocked;
            if view.owner.is_none() {
                view.owner = Some(event.actor.clone());
            }
            view.block_reason = Some(reason);
        }
        EventKind::TaskUnblocked => {
            let id = task_of(state)?;
            let phase = state.current_phase;
            let view = state.tasks.get_mut(&id).unwrap();
            if event.actor != OPERATOR_ACTOR || view.status != TaskStatus::Blocked || view.phase != phase {
                return Err(fail(format!(
                    "{} cannot unblock {id} in status {} (phase {})",
                    event.actor, view.status, view.phase
                )));
            }
            view.status = TaskStatus::Todo;
            view.owner = None;
            view.block_reason = None;
        }
        EventKind::PhaseAdvanced => {
            let to: u8 = payload_typed(event, "to")?;
            if to != state.current_phase + 1 || to as usize > registry.phases().len() {
                return Err(fail(format!(
                    "cannot advance from phase {} to {to}",
                    state.current_phase
                )));
            }
            if !state.phase_terminal(state.current_phase) {
                return Err(fail(format!("phase {} still has open tasks", state.current_phase)));
            }
            state.current_phase = to;
        }
    }
    state.last_sequence = Some(event.sequence);
    Ok(())
}

fn require_owned_in_progress(state: &AuditState, id: &str, actor: &str) -> Result<(), String> {
    let view = &state.tasks[id];
    if view.status != TaskStatus::InProgress {
        return Err(format!("task {id} is {}, not in_progress", view.status));
    }
    if view.owner.as_deref() != Some(actor) {
        return Err(format!("task {id} is not owned by {actor}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordedMatch {
    Matches,
    Mismatch,
    NotApplicable,
}

impl RecordedMatch {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordedMatch::Matches => "matches",
            RecordedMatch::Mismatch => "mismatch",
            RecordedMatch::NotApplicable => "not_applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub chain: ChainReport,
    /// Absent when the chain is broken (projection skipped) or projection failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_hash: Option<String>,
    pub matches_recorded: RecordedMatch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_error: Option<String>,
}

impl VerificationResult {
    pub fn ok(&self) -> bool {
        self.chain.valid && self.projection_error.is_none() && self.matches_recorded != RecordedMatch::Mismatch
    }
}

/// Verifies the chain, reprojects from scratch and checks the latest recorded state hash.
///
/// The recorded hash is compared against the projection of the log prefix that
/// ends at the verification event, so later operator events do not invalidate
/// an earlier, truthful verification.
pub fn replay_verify(log_path: &Path, registry: &Registry) -> Result<VerificationResult, event_store::StoreError> {
    let bytes = std::fs::read(log_path).map_err(|source| event_store::StoreError::Io {
        path: log_path.to_path_buf(),
        source,
    })?;
    Ok(replay_verify_bytes(&bytes, registry))
}

pub fn replay_verify_bytes(bytes: &[u8], registry: &Registry) -> VerificationResult {
    let chain = event_store::verify_bytes(bytes);
    if !chain.valid {
        return VerificationResult {
            chain,
            state_hash: None,
            matches_recorded: RecordedMatch::NotApplicable,
            projection_error: None,
        };
    }
    let events = event_store::scan_bytes(bytes).events;
    let state = match project(&events, registry) {
        Ok(s) => s,
        Err(e) => {
            return VerificationResult {
                chain,
                state_hash: None,
                matches_recorded: RecordedMatch::NotApplicable,
                projection_error: Some(e.to_string()),
            }
        }
    };
    let latest = events.iter().rposition(|e| e.kind == EventKind::VerificationRecorded);
    let matches_recorded = match latest {
        None => RecordedMatch::NotApplicable,
        Some(idx) => {
            let recorded = events[idx].payload_str("state_hash");
            let at_that_point = project(&events[..=idx], registry).map(|s| s.state_hash);
            match (recorded, at_that_point) {
                (Some(r), Ok(h)) if r == h => RecordedMatch::Matches,
                _ => RecordedMatch::Mismatch,
            }
        }
    };
    VerificationResult {
        chain,
        state_hash: Some(state.state_hash),
        matches_recorded,
        projection_error: None,
    }
}
