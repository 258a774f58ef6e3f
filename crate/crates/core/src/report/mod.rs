//! Final report rendering. Reports are projections of admitted state; every
//! finding they mention cites the event that admitted it.

mod json;
mod markdown;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::playbook::Registry;
use crate::projection::{AuditState, TaskStatus};
use crate::risk::{self, RecordedFinding, RiskAssessment, RiskError};

pub use json::render_json;
pub use markdown::{
    best_practices_section, executive_summary, findings_by_domain, remediations_section, render_markdown,
    CITATION_PREFIX, SCOPE_CAVEAT,
};

/// JSON schema for `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../../schemas/report.schema.json");

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("risk matrix was built from state {matrix} but the report is for state {state}")]
    StaleMatrix { matrix: String, state: String },
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Canonical(#[from] crate::canonical::CanonicalError),
}

/// Run facts that are not part of the projected state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub registry_digest: String,
    pub generated_at: String,
    pub outcome: String,
    pub events_verified: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBundle {
    pub markdown: String,
    pub json: String,
    pub generated_from_state_hash: String,
    pub generated_at: String,
}

/// Runs the risk cascade over the state's findings, stamped with its hash.
pub fn assess_state(
    state: &AuditState,
    registry: &Registry,
    quick_fix_threshold: u32,
) -> Result<RiskAssessment, RiskError> {
    risk::assess(&state.findings, registry, quick_fix_threshold, Some(&state.state_hash))
}

fn ensure_fresh(state: &AuditState, assessment: &RiskAssessment) -> Result<(), ReportError> {
    match &assessment.matrix.source_state_hash {
        Some(h) if *h == state.state_hash => Ok(()),
        other => Err(ReportError::StaleMatrix {
            matrix: other.clone().unwrap_or_else(|| "(unstamped)".into()),
            state: state.state_hash.clone(),
        }),
    }
}

/// Renders both documents from one state.
pub fn render_bundle(
    state: &AuditState,
    registry: &Registry,
    assessment: &RiskAssessment,
    meta: &RunMeta,
) -> Result<ReportBundle, ReportError> {
    Ok(ReportBundle {
        markdown: render_markdown(state, registry, assessment, meta)?,
        json: render_json(state, registry, assessment, meta)?,
        generated_from_state_hash: state.state_hash.clone(),
        generated_at: meta.generated_at.clone(),
    })
}

/// Final status of every registry check, with blocked-domain gaps made explicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check_id: String,
    pub domain_id: String,
    pub title: String,
    pub status: crate::risk::CheckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_sequence: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn check_table(state: &AuditState, registry: &Registry) -> Vec<CheckRow> {
    registry
        .checks()
        .iter()
        .map(|c| {
            let outcome = state.checks.get(&c.check_id);
            let task = registry.domain_task(&c.domain_id);
            let note = match (outcome, task.and_then(|t| state.task(&t.task_id))) {
                (Some(_), _) => None,
                (None, Some(v)) if v.status == TaskStatus::Blocked => Some(format!(
                    "coverage gap: task {} was blocked ({})",
                    v.task_id,
                    v.block_reason.as_deref().unwrap_or("no reason recorded")
                )),
                (None, Some(v)) => Some(format!("not evaluated: task {} is {}", v.task_id, v.status)),
                (None, None) => Some("not evaluated".into()),
            };
            CheckRow {
                check_id: c.check_id.clone(),
                domain_id: c.domain_id.clone(),
                title: c.title.clone(),
                status: outcome.map_or(crate::risk::CheckStatus::NotApplicable, |o| o.result.status),
                task_id: outcome.map(|o| o.task_id.clone()),
                event_sequence: outcome.map(|o| o.event_sequence),
                note,
            }
        })
        .collect()
}

/// Findings grouped by domain, in event order.
pub fn findings_per_domain<'a>(
    state: &'a AuditState,
    registry: &Registry,
) -> BTreeMap<String, Vec<&'a RecordedFinding>> {
    let mut out: BTreeMap<String, Vec<&RecordedFinding>> = BTreeMap::new();
    for f in &state.findings {
        if let Some(c) = registry.check(&f.finding.check_id) {
            out.entry(c.domain_id.clone()).or_default().push(f);
        }
    }
    out
}

/// Domains whose audit task ended blocked.
pub fn blocked_domains(state: &AuditState, registry: &Registry) -> Vec<(String, String, String)> {
    registry
        .domains()
        .iter()
        .filter_map(|d| {
            let t = registry.domain_task(&d.id)?;
            let v = state.task(&t.task_id)?;
            (v.status == TaskStatus::Blocked).then(|| {
                (
                    d.id.clone(),
                    t.task_id.clone(),
                    v.block_reason.clone().unwrap_or_default(),
                )
            })
        })
        .collect()
}

/// Report directory key for an artifact path (`phase1` … `phase4`, `final`).
pub fn artifact_group(path: &str) -> &str {
    path.strip_prefix("reports/")
        .and_then(|rest| rest.split('/').next())
        .unwrap_or("other")
}
