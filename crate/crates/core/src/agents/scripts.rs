//! Script builders for the scripted agent: a compliant run, a run that
//! commits each protocol violation once before repairing it, and a run that
//! abandons one task.

use crate::playbook::{Registry, TaskDef};
use crate::projection::TaskStatus;
use crate::protocol::{Action, FileUpdate, Intention};
use crate::risk::{CheckResult, CheckStatus};

use super::ScriptEntry;

/// Agent-side notes file for a task, inside its boundary.
pub fn notes_path(task: &TaskDef) -> String {
    format!("{}{}-notes.md", task.boundary[0], task.task_id)
}

fn pass(check_id: &str, explanation: &str) -> CheckResult {
    CheckResult {
        check_id: check_id.to_string(),
        status: CheckStatus::Pass,
        severity: None,
        evidence: Vec::new(),
        explanation: explanation.to_string(),
        remediation: String::new(),
    }
}

/// A compliant completion: agent-mode checks reported as passing (builtin
/// checks are executed by the orchestrator) plus a short notes file.
pub fn completion(registry: &Registry, task: &TaskDef, actor: &str) -> Intention {
    let mut checks: Vec<CheckResult> = registry
        .task_checks(task)
        .into_iter()
        .filter(|c| c.builtin_rule.is_none())
        .map(|c| pass(&c.check_id, "reviewed in the provided excerpts; no issue identified"))
        .collect();
    if task.domain_id.is_none() {
        checks.push(pass(
            &task.verification_check_id(),
            "task output reviewed against its inputs",
        ));
    }
    let notes = format!(
        "# {} {}\n\nReviewed by {actor}. Structured results are in the kernel artifact for this task.\n",
        task.task_id, task.title
    );
    Intention::complete(
        &task.task_id,
        actor,
        checks,
        Vec::new(),
        vec![FileUpdate {
            path: notes_path(task),
            content: notes,
        }],
    )
}

fn claim_and_complete(registry: &Registry, task: &TaskDef, actor: &str, out: &mut Vec<ScriptEntry>) {
    out.push(ScriptEntry::new(
        &task.task_id,
        Intention::claim(&task.task_id, actor).to_wire(),
    ));
    out.push(ScriptEntry::new(
        &task.task_id,
        completion(registry, task, actor).to_wire(),
    ));
}

pub fn happy_path_script(registry: &Registry, actor: &str) -> Vec<ScriptEntry> {
    let mut out = Vec::new();
    for task in registry.tasks() {
        claim_and_complete(registry, task, actor, &mut out);
    }
    out
}

/// One instance of each violation, each followed by a valid repair:
/// complete on a todo task, claim carrying file updates, stale prior status,
/// completion by a non-owner, a write outside the boundary, and a claim on a
/// done task.
pub fn adversarial_script(registry: &Registry, actor: &str) -> Vec<ScriptEntry> {
    let tasks = registry.tasks();
    let mut out = Vec::new();
    for (i, task) in tasks.iter().enumerate() {
        let id = task.task_id.as_str();
        let claim = Intention::claim(id, actor);
        let done = completion(registry, task, actor);
        match i {
            0 => {
                let mut premature = done.clone();
                premature.prior_status = TaskStatus::Todo;
                out.push(ScriptEntry::new(id, premature.to_wire()));
                claim_and_complete(registry, task, actor, &mut out);
            }
            1 => {
                let mut raw = serde_json::to_value(&claim).unwrap();
                raw["file_updates"] = serde_json::json!([{"path": notes_path(task), "content": "early"}]);
                out.push(ScriptEntry::new(id, raw.to_string()));
                claim_and_complete(registry, task, actor, &mut out);
            }
            2 => {
                let mut stale = claim.clone();
                stale.prior_status = TaskStatus::InProgress;
                out.push(ScriptEntry::new(id, stale.to_wire()));
                claim_and_complete(registry, task, actor, &mut out);
            }
            3 => {
                out.push(ScriptEntry::new(id, claim.to_wire()));
                let mut intruder = done.clone();
                intruder.actor = format!("{actor}-impostor");
                out.push(ScriptEntry::new(id, intruder.to_wire()));
                out.push(ScriptEntry::new(id, done.to_wire()));
            }
            4 => {
                out.push(ScriptEntry::new(id, claim.to_wire()));
                let mut escape = done.clone();
                escape.file_updates.push(FileUpdate {
                    path: "reports/phase1/override.md".into(),
                    content: "outside".into(),
                });
                out.push(ScriptEntry::new(id, escape.to_wire()));
                out.push(ScriptEntry::new(id, done.to_wire()));
            }
            5 => {
                let reopen = Intention::bare(Action::Claim, &tasks[0].task_id, actor, TaskStatus::Done);
                out.push(ScriptEntry::new(id, reopen.to_wire()));
                claim_and_complete(registry, task, actor, &mut out);
            }
            _ => claim_and_complete(registry, task, actor, &mut out),
        }
    }
    out
}

/// The happy path except that `abandoned` is claimed, answered once with an
/// out-of-boundary completion, and never repaired.
pub fn truncated_script(registry: &Registry, actor: &str, abandoned: &str) -> Vec<ScriptEntry> {
    let mut out = Vec::new();
    for task in registry.tasks() {
        if task.task_id == abandoned {
            out.push(ScriptEntry::new(
                &task.task_id,
                Intention::claim(&task.task_id, actor).to_wire(),
            ));
            let mut escape = completion(registry, task, actor);
            escape.file_updates.push(FileUpdate {
                path: "reports/final/report.md".into(),
                content: "nothing to see".into(),
            });
            out.push(ScriptEntry::new(&task.task_id, escape.to_wire()));
        } else {
            claim_and_complete(registry, task, actor, &mut out);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::parse_intention;

    #[test]
    fn happy_path_has_two_steps_per_task() {
        let r = Registry::shipped();
        let s = happy_path_script(&r, "A");
        assert_eq!(s.len(), 52);
        for e in &s {
            parse_intention(&e.raw_text).unwrap();
        }
    }

    #[test]
    fn adversarial_adds_six_entries() {
        let r = Registry::shipped();
        assert_eq!(adversarial_script(&r, "A").len(), 58);
    }
}
