//! Artifacts the orchestrator writes for each task from admitted state, so
//! the structured outputs never depend on agent prose.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::canonical;
use crate::playbook::{findings_for, run_builtin_check, CheckMode, Registry, RepoSnapshot, TaskDef, TaskKind};
use crate::projection::AuditState;
use crate::protocol::{FileUpdate, Intention};
use crate::report::{best_practices_section, executive_summary, remediations_section};
use crate::risk::{self, CheckResult};

use super::OrchestratorError;

const MANIFEST_NAMES: &[&str] = &[
    "requirements.txt",
    "pyproject.toml",
    "Pipfile",
    "setup.py",
    "package.json",
    "go.mod",
    "Cargo.toml",
    "Gemfile",
    "pom.xml",
    "build.gradle",
    "composer.json",
];
const ENTRY_STEMS: &[&str] = &[
    "main", "app", "server", "index", "wsgi", "asgi", "manage", "routes", "api",
];
const CONFIG_EXTS: &[&str] = &["yml", "yaml", "json", "toml", "ini", "cfg", "conf", "env", "properties"];

fn file_name(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

fn extension(path: &str) -> Option<&str> {
    let name = file_name(path);
    let (stem, ext) = name.rsplit_once('.')?;
    (!stem.is_empty()).then_some(ext)
}

fn canonical_text(v: &Value) -> Result<String, OrchestratorError> {
    let mut s = canonical::to_canonical_string(v)?;
    s.push('\n');
    Ok(s)
}

pub struct KernelInputs<'a> {
    pub registry: &'a Registry,
    pub repo: &'a RepoSnapshot,
    pub docs: Option<&'a RepoSnapshot>,
    pub quick_fix_threshold: u32,
}

/// Builtin results for a domain task, in registry order.
pub fn builtin_results(task: &TaskDef, inputs: &KernelInputs<'_>) -> Vec<CheckResult> {
    inputs
        .registry
        .task_checks(task)
        .into_iter()
        .filter(|c| c.mode == CheckMode::Builtin)
        .map(|c| run_builtin_check(c, inputs.registry, inputs.repo))
        .collect()
}

/// Content of the task's kernel artifact given the checks being completed.
pub fn artifact_content(
    task: &TaskDef,
    state: &AuditState,
    checks: &[CheckResult],
    inputs: &KernelInputs<'_>,
) -> Result<String, OrchestratorError> {
    let registry = inputs.registry;
    let files = inputs.repo.files();
    Ok(match task.kind {
        TaskKind::ReconStack => {
            let mut exts: BTreeMap<String, u64> = BTreeMap::new();
            for f in files {
                *exts.entry(extension(f).unwrap_or("(none)").to_string()).or_default() += 1;
            }
            let manifests: Vec<&String> = files
                .iter()
                .filter(|f| MANIFEST_NAMES.contains(&file_name(f)))
                .collect();
            canonical_text(&json!({
                "task_id": task.task_id,
                "files_total": files.len() as u64,
                "extensions": exts,
                "manifests": manifests,
                "docs_provided": inputs.docs.is_some(),
                "docs_files": inputs.docs.map_or(0, |d| d.files().len() as u64),
            }))?
        }
        TaskKind::ReconArchitecture => {
            let mut top: BTreeMap<String, u64> = BTreeMap::new();
            let mut depth = 0u64;
            for f in files {
                let parts = f.split('/').count() as u64;
                depth = depth.max(parts);
                let key = if parts > 1 {
                    f.split('/').next().unwrap_or("").to_string() + "/"
                } else {
                    ".".into()
                };
                *top.entry(key).or_default() += 1;
            }
            canonical_text(&json!({
                "task_id": task.task_id,
                "files_total": files.len() as u64,
                "max_depth": depth,
                "top_level": top,
            }))?
        }
        TaskKind::ReconAttackSurface => {
            let entry: Vec<&String> = files
                .iter()
                .filter(|f| {
                    let name = file_name(f);
                    let stem = name.split('.').next().unwrap_or(name);
                    ENTRY_STEMS.contains(&stem) && extension(f).is_some_and(|e| !CONFIG_EXTS.contains(&e))
                })
                .collect();
            let config: Vec<&String> = files
                .iter()
                .filter(|f| extension(f).is_some_and(|e| CONFIG_EXTS.contains(&e)) || file_name(f).starts_with(".env"))
                .collect();
            canonical_text(&json!({
                "task_id": task.task_id,
                "entry_points": entry,
                "configuration_files": config,
            }))?
        }
        TaskKind::DomainAudit => {
            let mut sorted: Vec<&CheckResult> = checks.iter().collect();
            sorted.sort_by(|a, b| a.check_id.cmp(&b.check_id));
            canonical_text(&json!({
                "task_id": task.task_id,
                "domain_id": task.domain_id,
                "checks": serde_json::to_value(&sorted).expect("check results serialize"),
            }))?
        }
        TaskKind::VulnerabilityInventory | TaskKind::SeverityClassification | TaskKind::RiskMatrix => {
            let a = risk::assess(
                &state.findings,
                registry,
                inputs.quick_fix_threshold,
                Some(&state.state_hash),
            )?;
            let body = match task.kind {
                TaskKind::VulnerabilityInventory => json!({"inventory": serde_json::to_value(&a.inventory).unwrap()}),
                TaskKind::SeverityClassification => json!({"classified": serde_json::to_value(&a.classified).unwrap()}),
                _ => json!({
                    "risk_matrix": serde_json::to_value(&a.matrix).unwrap(),
                    "score": serde_json::to_value(&a.score).unwrap(),
                }),
            };
            let mut doc = body;
            doc["task_id"] = json!(task.task_id);
            doc["source_state_hash"] = json!(state.state_hash);
            canonical_text(&doc)?
        }
        TaskKind::TechnicalRemediations => {
            let a = risk::assess(
                &state.findings,
                registry,
                inputs.quick_fix_threshold,
                Some(&state.state_hash),
            )?;
            format!("# Technical remediations\n\n{}", remediations_section(&a))
        }
        TaskKind::BestPractices => format!("# Best practices\n\n{}", best_practices_section(state, registry)),
        TaskKind::ExecutiveSummary => {
            let a = risk::assess(
                &state.findings,
                registry,
                inputs.quick_fix_threshold,
                Some(&state.state_hash),
            )?;
            format!("# Executive summary\n\n{}", executive_summary(state, registry, &a))
        }
        TaskKind::FinalReport => {
            let index: BTreeMap<&String, Value> = state
                .artifacts
                .iter()
                .map(|(p, a)| {
                    (
                        p,
                        json!({"task_id": a.written_by_task, "event_sequence": a.event_sequence, "sha256": a.sha256, "bytes": a.bytes}),
                    )
                })
                .collect();
            canonical_text(&json!({
                "task_id": task.task_id,
                "source_state_hash": state.state_hash,
                "artifacts": index,
            }))?
        }
    })
}

/// Makes a completion authoritative where the kernel can be: builtin results
/// replace whatever the agent said about those checks, findings follow the
/// builtin evidence, and the kernel artifact replaces any agent content at
/// that path.
pub fn augment_completion(
    intention: &mut Intention,
    task: &TaskDef,
    state: &AuditState,
    inputs: &KernelInputs<'_>,
) -> Result<(), OrchestratorError> {
    let builtin = builtin_results(task, inputs);
    if !builtin.is_empty() {
        let ids: Vec<&str> = builtin.iter().map(|r| r.check_id.as_str()).collect();
        intention.checks.retain(|c| !ids.contains(&c.check_id.as_str()));
        intention.findings.retain(|f| !ids.contains(&f.check_id.as_str()));
        for r in &builtin {
            intention.findings.extend(findings_for(r, inputs.registry));
        }
        intention.checks.extend(builtin);
        intention.checks.sort_by(|a, b| a.check_id.cmp(&b.check_id));
    }
    let path = task.kernel_artifact();
    let content = artifact_content(task, state, &intention.checks, inputs)?;
    intention.file_updates.retain(|u| u.path != path);
    intention.file_updates.push(FileUpdate { path, content });
    Ok(())
}
