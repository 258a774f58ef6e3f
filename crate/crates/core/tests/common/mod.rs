#![allow(dead_code)]

pub mod stub;

use std::path::{Path, PathBuf};

use audit_kernel::agents::ScriptEntry;
use audit_kernel::orchestrator::{self, RunOutcome};
use serde_json::json;

pub const AGENT: &str = "auditor";

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture_repo() -> PathBuf {
    manifest_dir().join("tests/fixtures/planted_repo")
}

pub fn goldens_dir() -> PathBuf {
    manifest_dir().join("tests/goldens")
}

pub fn update_goldens() -> bool {
    std::env::var_os("UPDATE_GOLDENS").is_some()
}

/// Compares `actual` with a committed golden, or rewrites it when
/// `UPDATE_GOLDENS` is set.
pub fn assert_golden(name: &str, actual: &str) {
    let path = goldens_dir().join(name);
    if update_goldens() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden {name} differs");
}

/// Writes a script and a fixed-clock config into `dir` and returns the config path.
pub fn write_config(dir: &Path, script: &[ScriptEntry]) -> PathBuf {
    write_config_with(dir, script, json!({}))
}

pub fn write_config_with(dir: &Path, script: &[ScriptEntry], extra: serde_json::Value) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let script_path = dir.join("script.json");
    std::fs::write(&script_path, serde_json::to_string_pretty(script).unwrap()).unwrap();
    let mut config = json!({
        "repo_root": fixture_repo(),
        "agents": [{"kind": "scripted", "name": AGENT, "script_path": "script.json"}],
        "agent_for_kind": {"default": AGENT},
        "clock": {"mode": "fixed", "start": "2026-01-01T00:00:00Z"},
    });
    for (k, v) in extra.as_object().unwrap() {
        config[k] = v.clone();
    }
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

/// init + run in `work/run`, with the config under `work/setup`.
pub fn init_and_run(work: &Path, script: &[ScriptEntry]) -> (PathBuf, RunOutcome) {
    let config = write_config(&work.join("setup"), script);
    let run_dir = work.join("run");
    orchestrator::cmd_init(&config, &run_dir).unwrap();
    let outcome = orchestrator::cmd_run(&run_dir).unwrap();
    (run_dir, outcome)
}

use audit_kernel::agents::scripts;
use audit_kernel::event_store::{EventBody, EventKind, EventLog};
use audit_kernel::playbook::Registry;
use audit_kernel::projection::{AuditState, TaskStatus};
use audit_kernel::protocol::{self, Action, FileUpdate, Intention, RejectionCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Nobody,
    Actor,
    Other,
}

pub const OWNERS: [Owner; 3] = [Owner::Nobody, Owner::Actor, Owner::Other];
pub const ACTIONS: [Action; 3] = [Action::Claim, Action::Complete, Action::Block];

#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub status: TaskStatus,
    pub action: Action,
    pub owner: Owner,
    pub prior: TaskStatus,
}

pub struct CellOutcome {
    pub cell: Cell,
    pub expected: Option<RejectionCode>,
    pub actual: Option<RejectionCode>,
    pub hash_unchanged: bool,
}

pub fn all_cells() -> Vec<Cell> {
    let mut out = Vec::new();
    for status in TaskStatus::ALL {
        for action in ACTIONS {
            for owner in OWNERS {
                for prior in TaskStatus::ALL {
                    out.push(Cell {
                        status,
                        action,
                        owner,
                        prior,
                    });
                }
            }
        }
    }
    out
}

/// Written from the rule list, independently of the validator: done first,
/// then the restated status, then the transition table, then ownership.
pub fn expected_code(c: Cell) -> Option<RejectionCode> {
    use TaskStatus::*;
    if c.status == Done {
        return Some(RejectionCode::DoneReopen);
    }
    if c.prior != c.status {
        return Some(RejectionCode::StatusMismatch);
    }
    let legal = matches!(
        (c.status, c.action),
        (Todo, Action::Claim) | (InProgress, Action::Complete) | (InProgress, Action::Block)
    );
    if !legal {
        return Some(RejectionCode::InvalidTransition);
    }
    let owner_ok = match c.action {
        Action::Claim => c.owner == Owner::Nobody,
        Action::Complete | Action::Block => c.owner == Owner::Actor,
    };
    (!owner_ok).then_some(RejectionCode::LockViolation)
}

pub fn grid_intention(registry: &Registry, c: Cell) -> Intention {
    let mut i = match c.action {
        Action::Claim => Intention::claim("T1", AGENT),
        Action::Block => Intention::block("T1", AGENT, "cannot proceed"),
        Action::Complete => {
            let t1 = registry.task("T1").unwrap();
            let mut i = scripts::completion(registry, t1, AGENT);
            i.file_updates.push(FileUpdate {
                path: t1.kernel_artifact(),
                content: "{}".into(),
            });
            i
        }
    };
    i.prior_status = c.prior;
    i
}

pub fn grid_state(registry: &Registry, c: Cell) -> AuditState {
    let mut s = AuditState::initial(registry);
    let v = s.tasks.get_mut("T1").unwrap();
    v.status = c.status;
    v.owner = match c.owner {
        Owner::Nobody => None,
        Owner::Actor => Some(AGENT.to_string()),
        Owner::Other => Some("intruder".to_string()),
    };
    s.state_hash = s.compute_hash();
    s
}

pub fn run_grid(registry: &Registry) -> Vec<CellOutcome> {
    all_cells()
        .into_iter()
        .map(|cell| {
            let state = grid_state(registry, cell);
            let before = state.clone();
            let intention = grid_intention(registry, cell);
            let result = protocol::validate(&intention, &state, registry);
            CellOutcome {
                cell,
                expected: expected_code(cell),
                actual: result.err().map(|r| r.code),
                hash_unchanged: state == before && state.compute_hash() == before.state_hash,
            }
        })
        .collect()
}

/// A valid log of exactly `n` events with varied payloads.
pub fn synthetic_log(path: &Path, n: u64) {
    let mut log = EventLog::create(path).unwrap();
    for i in 0..n {
        let payload = json!({
            "index": i,
            "label": format!("event-{i}"),
            "nested": {"flag": i % 2 == 0, "items": [i, i * 3, i * 7]},
        });
        let body = EventBody::new(
            format!("2026-01-01T00:{:02}:{:02}Z", i / 60, i % 60),
            if i == 0 { "orchestrator" } else { AGENT },
            if i == 0 {
                EventKind::RunInitialized
            } else {
                EventKind::VerificationRecorded
            },
            payload.as_object().unwrap().clone(),
        );
        log.append(body).unwrap();
    }
}

/// Line start offsets of a JSONL buffer.
pub fn line_spans(bytes: &[u8]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, b) in bytes.iter().enumerate() {
        if *b == b'\n' {
            spans.push((start, i));
            start = i + 1;
        }
    }
    spans
}
