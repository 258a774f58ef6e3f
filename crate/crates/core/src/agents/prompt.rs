use std::fmt::Write;

use crate::playbook::{CheckMode, ContextPack};

/// Written in place of the excerpt section when the pack carries none.
pub const NO_EXCERPTS_MARKER: &str = "(no repository excerpts)";

const SCHEMA: &str = r#"Reply with exactly one JSON object and nothing else:
{
  "action": "claim" | "complete" | "block",
  "task_id": string,
  "actor": string,
  "prior_status": "todo" | "in_progress" | "done" | "blocked",
  "checks": [CheckResult],            (complete only, at least one)
  "findings": [CheckResult],          (complete only, one per failing location)
  "file_updates": [{"path", "content"}], (complete only, inside the boundary)
  "reason": string                    (block only)
}
CheckResult: {"check_id", "status": "pass" | "fail" | "not_applicable",
  "severity": {"level": "CRITICAL" | "HIGH" | "MEDIUM" | "LOW" | "INFO",
               "cia_impact": {"confidentiality", "integrity", "availability": "none" | "partial" | "full"}},
  "evidence": [{"path", "line", "excerpt"}], "explanation", "remediation"}
A failing result needs severity, evidence and remediation. Claim first; do the work only when completing."#;

/// Renders a pack as a single prompt document. Byte-identical for equal packs.
pub fn render_prompt(pack: &ContextPack) -> String {
    let t = &pack.task;
    let mut out = String::new();
    let _ = writeln!(out, "# Task {}: {}", t.task_id, t.title);
    let _ = writeln!(out);
    let _ = writeln!(out, "phase: {} ({})", t.phase, pack.phase_name);
    let _ = writeln!(out, "kind: {}", t.kind);
    if let Some(d) = &t.domain_id {
        let _ = writeln!(out, "domain: {d}");
    }
    let _ = writeln!(out, "actor: {}", pack.actor);
    let _ = writeln!(out, "prior_status: {}", pack.prior_status);
    let _ = writeln!(out, "boundary: {}", t.boundary.join(", "));
    let _ = writeln!(out);

    let _ = writeln!(out, "## Checks");
    if pack.checks.is_empty() {
        let _ = writeln!(out, "(no registry checks; report the task verification check)");
    }
    for c in &pack.checks {
        let mode = match c.mode {
            CheckMode::Builtin => "builtin",
            CheckMode::Agent => "agent",
        };
        let _ = writeln!(
            out,
            "- {} [{mode}, default {}] {}",
            c.check_id, c.default_severity, c.title
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "## Required check ids");
    let _ = writeln!(out, "{}", pack.required_check_ids.join(", "));
    let _ = writeln!(out);
    let _ = writeln!(out, "## Intention schema");
    let _ = writeln!(out, "{SCHEMA}");
    let _ = writeln!(out);

    if !pack.repair_notes.is_empty() {
        let _ = writeln!(out, "## Rejections of earlier attempts");
        for n in &pack.repair_notes {
            let _ = writeln!(out, "- {n}");
        }
        let _ = writeln!(out);
    }

    let b = &pack.budget;
    let _ = writeln!(out, "## Repository excerpts");
    let _ = writeln!(
        out,
        "budget: {} of {} bytes, {} of {} files included, {} omitted",
        b.excerpt_bytes, b.byte_budget, b.files_included, b.files_in_scope, b.files_omitted
    );
    if pack.repo_excerpts.is_empty() {
        let _ = writeln!(out, "{NO_EXCERPTS_MARKER}");
    }
    for e in &pack.repo_excerpts {
        let flag = if e.truncated { " (truncated)" } else { "" };
        let _ = writeln!(out, "### {}{flag}", e.path);
        let _ = writeln!(out, "````");
        let _ = write!(out, "{}", e.content);
        if !e.content.ends_with('\n') {
            let _ = writeln!(out);
        }
        let _ = writeln!(out, "````");
    }
    let _ = writeln!(out);

    let _ = writeln!(out, "## Dependency artifacts");
    if pack.dependency_artifacts.is_empty() {
        let _ = writeln!(out, "(none)");
    }
    for a in &pack.dependency_artifacts {
        let _ = writeln!(out, "### {} (from {})", a.path, a.task_id);
        let _ = writeln!(out, "````");
        let _ = write!(out, "{}", a.content);
        if !a.content.ends_with('\n') {
            let _ = writeln!(out);
        }
        let _ = writeln!(out, "````");
    }
    if !pack.docs_provided && t.phase == 1 {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Note: no supplementary documentation directory was provided for this run."
        );
    }
    out
}
