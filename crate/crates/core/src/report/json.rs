use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::{artifact_group, blocked_domains, check_table, ensure_fresh, ReportError, RunMeta};
use crate::canonical;
use crate::playbook::Registry;
use crate::projection::{AuditState, TaskStatus};
use crate::risk::{CheckStatus, RiskAssessment};

pub const REPORT_VERSION: u64 = 1;

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report parts serialize")
}

/// Structured report as canonical JSON text.
pub fn render_json(
    state: &AuditState,
    registry: &Registry,
    assessment: &RiskAssessment,
    meta: &RunMeta,
) -> Result<String, ReportError> {
    ensure_fresh(state, assessment)?;

    let mut task_counts = serde_json::Map::new();
    for s in TaskStatus::ALL {
        task_counts.insert(s.as_str().into(), json!(state.count_status(s) as u64));
    }

    let mut index: BTreeMap<&str, Vec<Value>> = BTreeMap::new();
    for (path, a) in &state.artifacts {
        index.entry(artifact_group(path)).or_default().push(json!({
            "path": path,
            "task_id": a.written_by_task,
            "event_sequence": a.event_sequence,
            "sha256": a.sha256,
            "bytes": a.bytes,
        }));
    }

    let checks = check_table(state, registry);
    let count = |st: CheckStatus| checks.iter().filter(|c| c.status == st).count() as u64;
    let gaps = blocked_domains(state, registry);
    let gap_checks = checks
        .iter()
        .filter(|c| c.task_id.is_none() && gaps.iter().any(|(d, _, _)| *d == c.domain_id))
        .count() as u64;

    let findings: Vec<Value> = state
        .findings
        .iter()
        .map(|f| {
            let primary = f.finding.evidence.first();
            let mut v = json!({
                "event_sequence": f.event_sequence,
                "task_id": f.task_id,
                "check_id": f.finding.check_id,
                "severity": f.finding.severity.map(|s| s.level.as_str()).unwrap_or("INFO"),
                "path": primary.map(|e| e.path.as_str()).unwrap_or(""),
            });
            if let Some(line) = primary.and_then(|e| e.line) {
                v["line"] = json!(line);
            }
            v
        })
        .collect();

    let blocked: Vec<Value> = state
        .blocked_tasks()
        .map(|t| {
            let def = registry.task(&t.task_id).expect("state mirrors registry");
            let mut v = json!({
                "task_id": t.task_id,
                "kind": t.kind,
                "phase": t.phase,
                "reason": t.block_reason.clone().unwrap_or_default(),
            });
            if let Some(d) = &def.domain_id {
                v["domain_id"] = json!(d);
            }
            v
        })
        .collect();

    let doc = json!({
        "report_version": REPORT_VERSION,
        "generated_at": meta.generated_at,
        "generated_from_state_hash": state.state_hash,
        "run": {
            "registry_digest": meta.registry_digest,
            "outcome": meta.outcome,
            "events_verified": meta.events_verified,
            "current_phase": state.current_phase,
            "partial": state.count_status(TaskStatus::Done) != state.tasks.len(),
        },
        "tasks": task_counts,
        "coverage": {
            "phases": registry.phases().len() as u64,
            "domains_total": registry.domains().len() as u64,
            "domains_blocked": gaps.len() as u64,
            "checks_total": checks.len() as u64,
            "checks_pass": count(CheckStatus::Pass),
            "checks_fail": count(CheckStatus::Fail),
            "checks_not_applicable": count(CheckStatus::NotApplicable),
            "checks_in_coverage_gaps": gap_checks,
            "gaps": gaps
                .iter()
                .map(|(d, t, reason)| json!({"domain_id": d, "task_id": t, "reason": reason}))
                .collect::<Vec<_>>(),
        },
        "artifact_index": to_value(&index),
        "checks": to_value(&checks),
        "findings": findings,
        "inventory": to_value(&assessment.classified),
        "risk_matrix": to_value(&assessment.matrix),
        "score": to_value(&assessment.score),
        "blocked_tasks": blocked,
    });
    Ok(canonical::to_canonical_string(&doc)?)
}
