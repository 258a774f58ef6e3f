//! Task selection and purified context packs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use globset::GlobSet;
use serde::{Deserialize, Serialize};

use super::registry::{compile_globs, CheckDef, Registry, TaskDef};
use super::snapshot::{read_text, RepoSnapshot};
use crate::canonical::sha256_hex;
use crate::projection::{AuditState, TaskStatus};

/// Marker appended to content cut by the byte budget.
pub const TRUNCATION_MARKER: &str = "\n[... truncated by context budget ...]\n";
/// Path prefix for excerpts taken from the optional documentation directory.
pub const DOCS_PREFIX: &str = "@docs/";

/// Todo tasks of the current phase whose dependencies are all done, in
/// registry order.
pub fn eligible_tasks(state: &AuditState, registry: &Registry) -> Vec<String> {
    registry
        .tasks()
        .iter()
        .filter(|t| t.phase == state.current_phase)
        .filter(|t| state.status_of(&t.task_id) == Some(TaskStatus::Todo))
        .filter(|t| {
            t.depends_on
                .iter()
                .all(|d| state.status_of(d) == Some(TaskStatus::Done))
        })
        .map(|t| t.task_id.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excerpt {
    pub path: String,
    pub content: String,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyArtifact {
    pub task_id: String,
    pub path: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub byte_budget: u64,
    pub excerpt_bytes: u64,
    pub files_in_scope: u64,
    pub files_included: u64,
    pub files_omitted: u64,
}

/// Minimal, history-free input for one dispatch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPack {
    pub task: TaskDef,
    pub phase_name: String,
    pub checks: Vec<CheckDef>,
    /// Check ids the completion must report on.
    pub required_check_ids: Vec<String>,
    pub prior_status: TaskStatus,
    pub actor: String,
    pub repo_excerpts: Vec<Excerpt>,
    pub dependency_artifacts: Vec<DependencyArtifact>,
    pub budget: BudgetReport,
    pub docs_provided: bool,
    /// Rejection feedback from earlier attempts at the same step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repair_notes: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ContextError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("dependency {task} has no artifact indexed in state")]
    MissingDependencyArtifact { task: String },
    #[error("dependency artifact {path} is missing or unreadable: {source}")]
    ArtifactUnreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dependency artifact {path} does not match its indexed digest")]
    ArtifactDigest { path: String },
    #[error("repository file {path} could not be read: {source}")]
    RepoUnreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("context globs for {task}: {reason}")]
    Globs { task: String, reason: String },
}

/// Inputs that stay fixed for the whole run.
pub struct ContextSources<'a> {
    pub registry: &'a Registry,
    pub repo: &'a RepoSnapshot,
    pub docs: Option<&'a RepoSnapshot>,
    /// Directory artifact paths are relative to.
    pub artifact_root: &'a Path,
    pub byte_budget: u64,
}

fn scope_globs(task: &TaskDef, checks: &[CheckDef]) -> Vec<String> {
    let mut globs: BTreeSet<String> = task.context_globs.iter().cloned().collect();
    for c in checks {
        if let Some(rule) = &c.builtin_rule {
            globs.extend(rule.globs().into_iter().map(str::to_string));
        }
    }
    globs.into_iter().collect()
}

/// Cuts `text` to at most `max` bytes on a char boundary.
fn cut(text: &str, max: usize) -> &str {
    if text.len() <= max {
        return text;
    }
    let mut end = max;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    &text[..end]
}

/// Builds the pack for `task_id` as seen in `state`. Pure given the state,
/// registry, snapshots and artifact files.
pub fn build_context(
    task_id: &str,
    state: &AuditState,
    actor: &str,
    sources: &ContextSources<'_>,
) -> Result<ContextPack, ContextError> {
    let registry = sources.registry;
    let task = registry
        .task(task_id)
        .ok_or_else(|| ContextError::UnknownTask(task_id.to_string()))?;
    let prior_status = state
        .status_of(task_id)
        .ok_or_else(|| ContextError::UnknownTask(task_id.to_string()))?;
    let checks: Vec<CheckDef> = registry.task_checks(task).into_iter().cloned().collect();

    let globs = scope_globs(task, &checks);
    let set: GlobSet = compile_globs(&globs).map_err(|reason| ContextError::Globs {
        task: task_id.to_string(),
        reason,
    })?;
    let mut candidates: Vec<(String, PathBuf)> = sources
        .repo
        .matching(&set)
        .map(|p| (p.clone(), sources.repo.absolute(p)))
        .collect();
    if task.phase == 1 {
        if let Some(docs) = sources.docs {
            candidates.extend(
                docs.files()
                    .iter()
                    .map(|p| (format!("{DOCS_PREFIX}{p}"), docs.absolute(p))),
            );
        }
    }

    let budget = sources.byte_budget as usize;
    let mut used = 0usize;
    let mut excerpts = Vec::new();
    let mut omitted = 0u64;
    let mut in_scope = 0u64;
    for (rel, abs) in &candidates {
        let text = match read_text(abs) {
            Ok(Some(t)) => t,
            Ok(None) => continue,
            Err(source) => {
                return Err(ContextError::RepoUnreadable {
                    path: rel.clone(),
                    source,
                })
            }
        };
        in_scope += 1;
        let remaining = budget - used;
        if remaining == 0 {
            omitted += 1;
            continue;
        }
        let slice = cut(&text, remaining);
        let truncated = slice.len() < text.len();
        used += slice.len();
        let mut content = slice.to_string();
        if truncated {
            content.push_str(TRUNCATION_MARKER);
        }
        excerpts.push(Excerpt {
            path: rel.clone(),
            content,
            truncated,
        });
    }

    let mut dependency_artifacts = Vec::new();
    for dep in &task.depends_on {
        let mut found = false;
        for (path, entry) in state.artifacts_of(dep) {
            found = true;
            let bytes =
                std::fs::read(sources.artifact_root.join(path)).map_err(|source| ContextError::ArtifactUnreadable {
                    path: path.clone(),
                    source,
                })?;
            if sha256_hex(&bytes) != entry.sha256 {
                return Err(ContextError::ArtifactDigest { path: path.clone() });
            }
            dependency_artifacts.push(DependencyArtifact {
                task_id: dep.clone(),
                path: path.clone(),
                content: String::from_utf8_lossy(&bytes).into_owned(),
            });
        }
        if !found {
            return Err(ContextError::MissingDependencyArtifact { task: dep.clone() });
        }
    }

    Ok(ContextPack {
        task: task.clone(),
        phase_name: registry.phase_name(task.phase).to_string(),
        required_check_ids: registry.required_check_ids(task).into_iter().collect(),
        checks,
        prior_status,
        actor: actor.to_string(),
        budget: BudgetReport {
            byte_budget: sources.byte_budget,
            excerpt_bytes: used as u64,
            files_in_scope: in_scope,
            files_included: excerpts.len() as u64,
            files_omitted: omitted,
        },
        repo_excerpts: excerpts,
        dependency_artifacts,
        docs_provided: sources.docs.is_some(),
        repair_notes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sources<'a>(r: &'a Registry, repo: &'a RepoSnapshot, root: &'a Path, budget: u64) -> ContextSources<'a> {
        ContextSources {
            registry: r,
            repo,
            docs: None,
            artifact_root: root,
            byte_budget: budget,
        }
    }

    #[test]
    fn initial_eligibility_is_first_recon_task() {
        let r = Registry::shipped();
        let s = AuditState::initial(&r);
        assert_eq!(eligible_tasks(&s, &r), ["T1"]);
    }

    #[test]
    fn empty_repo_context_has_no_excerpts() {
        let r = Registry::shipped();
        let dir = tempfile::tempdir().unwrap();
        let snap = RepoSnapshot::scan(dir.path()).unwrap();
        let s = AuditState::initial(&r);
        let pack = build_context("T1", &s, "A", &sources(&r, &snap, dir.path(), 1024)).unwrap();
        assert!(pack.repo_excerpts.is_empty());
        assert_eq!(pack.prior_status, TaskStatus::Todo);
        assert_eq!(pack.required_check_ids, ["T1.verify"]);
    }

    #[test]
    fn budget_truncates() {
        let r = Registry::shipped();
        let dir = tempfile::tempdir().unwrap();
        for i in 0..5 {
            std::fs::create_dir_all(dir.path().join(format!("m{i}"))).unwrap();
            std::fs::write(dir.path().join(format!("m{i}/README.md")), "word ".repeat(100)).unwrap();
        }
        let snap = RepoSnapshot::scan(dir.path()).unwrap();
        let s = AuditState::initial(&r);
        let pack = build_context("T1", &s, "A", &sources(&r, &snap, dir.path(), 1024)).unwrap();
        assert_eq!(pack.budget.excerpt_bytes, 1024);
        assert_eq!(pack.repo_excerpts.len(), 3);
        assert!(pack.repo_excerpts[2].truncated);
        assert!(pack.repo_excerpts[2].content.ends_with(TRUNCATION_MARKER));
        assert_eq!(pack.budget.files_omitted, 2);
    }

    #[test]
    fn domain_task_needs_dependency_artifacts() {
        let r = Registry::shipped();
        let dir = tempfile::tempdir().unwrap();
        let snap = RepoSnapshot::scan(dir.path()).unwrap();
        let mut s = AuditState::initial(&r);
        s.current_phase = 2;
        for t in ["T1", "T2", "T3"] {
            s.tasks.get_mut(t).unwrap().status = TaskStatus::Done;
        }
        let err = build_context("T4", &s, "A", &sources(&r, &snap, dir.path(), 1024)).unwrap_err();
        assert!(matches!(err, ContextError::MissingDependencyArtifact { .. }));
    }
}
