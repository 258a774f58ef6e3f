//! Task state machine and fail-closed validation of agent intentions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::canonical::sha256_hex;
use crate::event_store::{EventBody, EventKind, Payload};
use crate::paths::strict_relative;
use crate::playbook::{Registry, FINAL_REPORT_JSON, FINAL_REPORT_MD};
use crate::projection::{AuditState, TaskStatus};
use crate::risk::{CheckResult, CheckStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Claim,
    Complete,
    Block,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Claim, Action::Complete, Action::Block];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Claim => "claim",
            Action::Complete => "complete",
            Action::Block => "block",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileUpdate {
    pub path: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intention {
    pub action: Action,
    pub task_id: String,
    pub actor: String,
    pub prior_status: TaskStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub file_updates: Vec<FileUpdate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<CheckResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Intention {
    pub fn claim(task_id: &str, actor: &str) -> Self {
        Self::bare(Action::Claim, task_id, actor, TaskStatus::Todo)
    }

    pub fn block(task_id: &str, actor: &str, reason: &str) -> Self {
        Self {
            reason: Some(reason.to_string()),
            ..Self::bare(Action::Block, task_id, actor, TaskStatus::InProgress)
        }
    }

    pub fn complete(
        task_id: &str,
        actor: &str,
        checks: Vec<CheckResult>,
        findings: Vec<CheckResult>,
        file_updates: Vec<FileUpdate>,
    ) -> Self {
        Self {
            checks,
            findings,
            file_updates,
            ..Self::bare(Action::Complete, task_id, actor, TaskStatus::InProgress)
        }
    }

    pub fn bare(action: Action, task_id: &str, actor: &str, prior_status: TaskStatus) -> Self {
        Self {
            action,
            task_id: task_id.to_string(),
            actor: actor.to_string(),
            prior_status,
            checks: Vec::new(),
            file_updates: Vec::new(),
            findings: Vec::new(),
            reason: None,
        }
    }

    /// Wire form, one canonical JSON object.
    pub fn to_wire(&self) -> String {
        crate::canonical::to_canonical_string(self).expect("intentions are canonically encodable")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionCode {
    SchemaViolation,
    InvalidTransition,
    StatusMismatch,
    LockViolation,
    BoundaryViolation,
    CompoundAction,
    DoneReopen,
    UnknownTask,
}

impl RejectionCode {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectionCode::SchemaViolation => "schema_violation",
            RejectionCode::InvalidTransition => "invalid_transition",
            RejectionCode::StatusMismatch => "status_mismatch",
            RejectionCode::LockViolation => "lock_violation",
            RejectionCode::BoundaryViolation => "boundary_violation",
            RejectionCode::CompoundAction => "compound_action",
            RejectionCode::DoneReopen => "done_reopen",
            RejectionCode::UnknownTask => "unknown_task",
        }
    }
}

impl fmt::Display for RejectionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {detail}")]
pub struct Rejection {
    pub code: RejectionCode,
    pub detail: String,
}

impl Rejection {
    pub fn new(code: RejectionCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }
}

fn schema(detail: impl Into<String>) -> Rejection {
    Rejection::new(RejectionCode::SchemaViolation, detail)
}

/// Strict parse of exactly one JSON object.
///
/// Trailing values (two concatenated objects) are a schema violation. A JSON
/// array of intentions, or an array-valued `action`, is a compound action.
pub fn parse_intention(raw: &str) -> Result<Intention, Rejection> {
    let mut stream = serde_json::Deserializer::from_str(raw).into_iter::<Value>();
    let value = match stream.next() {
        None => return Err(schema("empty emission")),
        Some(Err(e)) => return Err(schema(format!("not valid JSON: {e}"))),
        Some(Ok(v)) => v,
    };
    match stream.next() {
        None => {}
        Some(Ok(_)) => return Err(schema("more than one JSON value in a single emission")),
        Some(Err(e)) => return Err(schema(format!("trailing content after the intention: {e}"))),
    }
    let obj = match value {
        Value::Object(o) => o,
        Value::Array(_) => {
            return Err(Rejection::new(
                RejectionCode::CompoundAction,
                "a list of intentions was emitted; send exactly one",
            ))
        }
        other => return Err(schema(format!("expected a JSON object, found {}", json_type(&other)))),
    };
    if matches!(obj.get("action"), Some(Value::Array(_))) {
        return Err(Rejection::new(
            RejectionCode::CompoundAction,
            "action must be a single value, not a list",
        ));
    }
    check_no_floats(&Value::Object(obj.clone()), "")?;
    let present: BTreeSet<String> = obj.keys().cloned().collect();
    let intention: Intention =
        serde_json::from_value(Value::Object(obj)).map_err(|e| schema(format!("intention schema: {e}")))?;
    check_shape(&intention, &present)?;
    Ok(intention)
}

fn json_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn check_no_floats(v: &Value, at: &str) -> Result<(), Rejection> {
    match v {
        Value::Number(n) if !(n.is_u64() || n.is_i64()) => Err(schema(format!("non-integer number at {at}"))),
        Value::Null => Err(schema(format!("null is not allowed (at {at})"))),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .try_for_each(|(i, x)| check_no_floats(x, &format!("{at}[{i}]"))),
        Value::Object(m) => m.iter().try_for_each(|(k, x)| check_no_floats(x, &format!("{at}.{k}"))),
        _ => Ok(()),
    }
}

fn check_shape(i: &Intention, present: &BTreeSet<String>) -> Result<(), Rejection> {
    if i.task_id.trim().is_empty() {
        return Err(schema("task_id must be non-empty"));
    }
    if i.actor.trim().is_empty() {
        return Err(schema("actor must be non-empty"));
    }
    let forbidden: &[&str] = match i.action {
        Action::Claim => &["checks", "file_updates", "findings", "reason"],
        Action::Block => &["checks", "file_updates", "findings"],
        Action::Complete => &["reason"],
    };
    if let Some(f) = forbidden.iter().find(|f| present.contains(**f)) {
        return Err(schema(format!(
            "{} carries no {f}; artifact writes belong to complete",
            i.action
        )));
    }
    match i.action {
        Action::Block => {
            if i.reason.as_deref().map(str::trim).unwrap_or("").is_empty() {
                return Err(schema("block requires a non-empty reason"));
            }
        }
        Action::Complete => {
            if i.checks.is_empty() {
                return Err(schema("complete requires at least one check result"));
            }
            for c in &i.checks {
                if let Some(e) = c.shape_error() {
                    return Err(schema(format!("check result: {e}")));
                }
            }
            for f in &i.findings {
                if f.status != CheckStatus::Fail {
                    return Err(schema(format!("finding for {} must have status fail", f.check_id)));
                }
                if let Some(e) = f.shape_error() {
                    return Err(schema(format!("finding: {e}")));
                }
            }
        }
        Action::Claim => {}
    }
    Ok(())
}

/// The legal transitions: (todo, claim), (in_progress, complete), (in_progress, block).
pub fn transition(status: TaskStatus, action: Action) -> Result<TaskStatus, Rejection> {
    match (status, action) {
        (TaskStatus::Todo, Action::Claim) => Ok(TaskStatus::InProgress),
        (TaskStatus::InProgress, Action::Complete) => Ok(TaskStatus::Done),
        (TaskStatus::InProgress, Action::Block) => Ok(TaskStatus::Blocked),
        _ => Err(Rejection::new(
            RejectionCode::InvalidTransition,
            format!("{action} is not permitted on a {status} task"),
        )),
    }
}

/// An event body awaiting a timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProposedEvent {
    pub actor: String,
    pub kind: EventKind,
    pub payload: Payload,
}

impl ProposedEvent {
    pub fn new(actor: &str, kind: EventKind, payload: Value) -> Self {
        let Value::Object(payload) = payload else {
            panic!("event payloads are objects")
        };
        Self {
            actor: actor.to_string(),
            kind,
            payload,
        }
    }

    pub fn into_body(self, timestamp: impl Into<String>) -> EventBody {
        EventBody::new(timestamp, self.actor, self.kind, self.payload)
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("protocol types serialize")
}

/// Validates one intention against projected state.
///
/// Returns the events to append or exactly one rejection; never has effects.
pub fn validate(
    intention: &Intention,
    state: &AuditState,
    registry: &Registry,
) -> Result<Vec<ProposedEvent>, Rejection> {
    let id = intention.task_id.as_str();
    let (Some(task), Some(view)) = (registry.task(id), state.task(id)) else {
        return Err(Rejection::new(
            RejectionCode::UnknownTask,
            format!("no task {id:?} in the registry"),
        ));
    };
    if view.status == TaskStatus::Done {
        return Err(Rejection::new(
            RejectionCode::DoneReopen,
            format!("{id} is done and cannot be reopened"),
        ));
    }
    if intention.prior_status != view.status {
        return Err(Rejection::new(
            RejectionCode::StatusMismatch,
            format!(
                "intention restates {id} as {} but it is {}",
                intention.prior_status, view.status
            ),
        ));
    }
    transition(view.status, intention.action)?;

    let actor = intention.actor.as_str();
    match intention.action {
        Action::Claim => {
            if task.phase != state.current_phase {
                return Err(Rejection::new(
                    RejectionCode::InvalidTransition,
                    format!(
                        "{id} belongs to phase {} but the run is in phase {}",
                        task.phase, state.current_phase
                    ),
                ));
            }
            if let Some(dep) = task
                .depends_on
                .iter()
                .find(|d| state.status_of(d) != Some(TaskStatus::Done))
            {
                return Err(Rejection::new(
                    RejectionCode::InvalidTransition,
                    format!("{id} depends on {dep}, which is not done"),
                ));
            }
            if let Some(owner) = &view.owner {
                return Err(Rejection::new(
                    RejectionCode::LockViolation,
                    format!("{id} is already owned by {owner}"),
                ));
            }
            Ok(vec![ProposedEvent::new(
                actor,
                EventKind::TaskClaimed,
                json!({"task_id": id, "prior_status": view.status}),
            )])
        }
        Action::Complete | Action::Block => {
            if view.owner.as_deref() != Some(actor) {
                let owner = view.owner.as_deref().unwrap_or("nobody");
                return Err(Rejection::new(
                    RejectionCode::LockViolation,
                    format!("{id} is owned by {owner}, not {actor}"),
                ));
            }
            if intention.action == Action::Block {
                let reason = intention.reason.clone().unwrap_or_default();
                return Ok(vec![ProposedEvent::new(
                    actor,
                    EventKind::TaskBlocked,
                    json!({"task_id": id, "reason": reason, "prior_status": view.status, "origin": "agent"}),
                )]);
            }
            validate_completion(intention, state, registry)
        }
    }
}

fn validate_completion(
    intention: &Intention,
    state: &AuditState,
    registry: &Registry,
) -> Result<Vec<ProposedEvent>, Rejection> {
    let id = intention.task_id.as_str();
    let actor = intention.actor.as_str();
    let task = registry.task(id).expect("checked by caller");

    let reserved: BTreeMap<String, &str> = registry
        .tasks()
        .iter()
        .filter(|t| t.task_id != id)
        .map(|t| (t.kernel_artifact(), t.task_id.as_str()))
        .chain([FINAL_REPORT_MD, FINAL_REPORT_JSON].map(|p| (p.to_string(), "the report renderer")))
        .collect();
    let mut writes: BTreeMap<String, &FileUpdate> = BTreeMap::new();
    for u in &intention.file_updates {
        let Some(path) = strict_relative(&u.path) else {
            return Err(Rejection::new(
                RejectionCode::BoundaryViolation,
                format!("{:?} is not a plain relative path", u.path),
            ));
        };
        if !task.boundary.iter().any(|b| path.starts_with(b.as_str())) {
            return Err(Rejection::new(
                RejectionCode::BoundaryViolation,
                format!("{path} is outside the boundary of {id} ({})", task.boundary.join(", ")),
            ));
        }
        if let Some(other) = reserved.get(&path) {
            return Err(Rejection::new(
                RejectionCode::BoundaryViolation,
                format!("{path} is reserved for {other}"),
            ));
        }
        if let Some(entry) = state.artifacts.get(&path) {
            if entry.written_by_task != id {
                return Err(Rejection::new(
                    RejectionCode::BoundaryViolation,
                    format!("{path} was already written by {}", entry.written_by_task),
                ));
            }
        }
        if writes.insert(path.clone(), u).is_some() {
            return Err(schema(format!("{path} is written twice")));
        }
    }
    let kernel = task.kernel_artifact();
    if !writes.contains_key(&kernel) {
        return Err(schema(format!("completion of {id} must write {kernel}")));
    }

    let required = registry.required_check_ids(task);
    let mut reported: BTreeMap<&str, &CheckResult> = BTreeMap::new();
    for c in &intention.checks {
        if !required.contains(&c.check_id) {
            return Err(schema(format!("check {} is not part of {id}", c.check_id)));
        }
        if reported.insert(c.check_id.as_str(), c).is_some() {
            return Err(schema(format!("check {} reported twice", c.check_id)));
        }
    }
    if let Some(missing) = required.iter().find(|r| !reported.contains_key(r.as_str())) {
        return Err(schema(format!("completion of {id} is missing check {missing}")));
    }
    for f in &intention.findings {
        match reported.get(f.check_id.as_str()) {
            Some(c) if c.status == CheckStatus::Fail => {}
            _ => {
                return Err(schema(format!(
                    "finding for {} has no failing check result",
                    f.check_id
                )))
            }
        }
        if registry.check(&f.check_id).is_none() {
            return Err(schema(format!("finding for {} names no registry check", f.check_id)));
        }
    }
    for (cid, c) in &reported {
        if c.status == CheckStatus::Fail && !intention.findings.iter().any(|f| f.check_id == *cid) {
            return Err(schema(format!("failing check {cid} has no finding")));
        }
    }

    let mut events = Vec::new();
    for f in &intention.findings {
        events.push(ProposedEvent::new(
            actor,
            EventKind::FindingRecorded,
            json!({"task_id": id, "finding": to_value(f)}),
        ));
    }
    for (path, u) in &writes {
        events.push(ProposedEvent::new(
            actor,
            EventKind::ArtifactWritten,
            json!({
                "task_id": id,
                "path": path,
                "sha256": sha256_hex(u.content.as_bytes()),
                "bytes": u.content.len() as u64,
            }),
        ));
    }
    let checks: Vec<Value> = reported.values().map(|c| to_value(*c)).collect();
    let artifacts: Vec<&String> = writes.keys().collect();
    let mut payload = Map::new();
    payload.insert("task_id".into(), json!(id));
    payload.insert("checks".into(), Value::Array(checks));
    payload.insert("artifacts".into(), json!(artifacts));
    events.push(ProposedEvent::new(
        actor,
        EventKind::TaskCompleted,
        Value::Object(payload),
    ));
    Ok(events)
}
