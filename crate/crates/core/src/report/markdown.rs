use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::{blocked_domains, check_table, ensure_fresh, findings_per_domain, ReportError, RunMeta};
use crate::playbook::Registry;
use crate::projection::{AuditState, TaskStatus};
use crate::risk::{CheckStatus, ImpactLevel, RiskAssessment, SeverityLevel};

/// Inline citation form: `[E:<sequence>]`.
pub const CITATION_PREFIX: &str = "[E:";
/// Scope statement carried by every summary.
pub const SCOPE_CAVEAT: &str =
    "These results describe the audited scope only. They do not establish that the repository is free of other vulnerabilities.";

const TOP_RISKS: usize = 5;

fn cite(seq: u64) -> String {
    format!("{CITATION_PREFIX}{seq}]")
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn impact(i: ImpactLevel) -> &'static str {
    match i {
        ImpactLevel::None => "none",
        ImpactLevel::Partial => "partial",
        ImpactLevel::Full => "full",
    }
}

fn location(path: &str, line: Option<u64>) -> String {
    match line {
        Some(l) => format!("{path}:{l}"),
        None => path.to_string(),
    }
}

/// Score, severity counts, the head of the risk matrix and coverage caveats.
pub fn executive_summary(state: &AuditState, registry: &Registry, assessment: &RiskAssessment) -> String {
    let mut out = String::new();
    let score = &assessment.score;
    let rows = &assessment.matrix.rows;
    if rows.is_empty() {
        let _ = writeln!(
            out,
            "Security score {}/100, no findings in the audited scope.",
            score.value
        );
    } else {
        let _ = writeln!(
            out,
            "Security score {}/100, {} consolidated vulnerabilities from {} findings.",
            score.value,
            rows.len(),
            state.findings.len()
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "| Severity | Count | Weight | Deduction |");
    let _ = writeln!(out, "|---|---|---|---|");
    for d in &score.deductions {
        let _ = writeln!(out, "| {} | {} | {} | {} |", d.level, d.count, d.weight, d.subtotal);
    }
    let _ = writeln!(out);
    if !rows.is_empty() {
        let _ = writeln!(out, "Top risks:");
        let _ = writeln!(out);
        for (i, r) in rows.iter().take(TOP_RISKS).enumerate() {
            let record = assessment.classified.iter().find(|v| v.vuln_id == r.vuln_id);
            let title = record.map_or("", |v| v.title.as_str());
            let cites: Vec<String> = record
                .map(|v| v.event_sequences.iter().map(|s| cite(*s)).collect())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{}. {} {} ({}) {} {}",
                i + 1,
                r.severity,
                r.vuln_id,
                r.check_id,
                title,
                cites.join(" ")
            );
        }
        let _ = writeln!(out);
    }
    let gaps = blocked_domains(state, registry);
    let blocked = state.count_status(TaskStatus::Blocked);
    if blocked > 0 {
        let _ = writeln!(
            out,
            "Coverage caveat: {blocked} task(s) ended blocked and {} domain(s) were not fully audited.",
            gaps.len()
        );
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "{SCOPE_CAVEAT}");
    out
}

/// One subsection per domain; clean domains say so, blocked ones are gaps.
pub fn findings_by_domain(state: &AuditState, registry: &Registry) -> String {
    let mut out = String::new();
    let per_domain = findings_per_domain(state, registry);
    let checks = check_table(state, registry);
    for d in registry.domains() {
        let _ = writeln!(out, "### {} (`{}`)", d.name, d.id);
        let _ = writeln!(out);
        let rows: Vec<_> = checks.iter().filter(|c| c.domain_id == d.id).collect();
        let n = |s: CheckStatus| rows.iter().filter(|c| c.status == s).count();
        let task = registry.domain_task(&d.id).and_then(|t| state.task(&t.task_id));
        match task {
            Some(v) if v.status == TaskStatus::Blocked => {
                let _ = writeln!(
                    out,
                    "Coverage gap: task {} was blocked ({}). The {} checks of this domain were not evaluated.",
                    v.task_id,
                    v.block_reason.as_deref().unwrap_or("no reason recorded"),
                    rows.len()
                );
            }
            Some(v) if v.status != TaskStatus::Done => {
                let _ = writeln!(out, "Not evaluated: task {} is {}.", v.task_id, v.status);
            }
            _ => {
                let _ = writeln!(
                    out,
                    "Checks: {} (pass {}, fail {}, not applicable {}).",
                    rows.len(),
                    n(CheckStatus::Pass),
                    n(CheckStatus::Fail),
                    n(CheckStatus::NotApplicable)
                );
                let _ = writeln!(out);
                match per_domain.get(&d.id) {
                    None => {
                        let _ = writeln!(out, "No findings.");
                    }
                    Some(fs) => {
                        for f in fs {
                            let check = registry.check(&f.finding.check_id);
                            let level = f.finding.severity.map_or(SeverityLevel::Info, |s| s.level);
                            let e = f.finding.evidence.first();
                            let _ = writeln!(
                                out,
                                "- **{}** {} `{}`: {} {}",
                                f.finding.check_id,
                                level,
                                e.map(|e| location(&e.path, e.line)).unwrap_or_default(),
                                check.map_or("", |c| c.title.as_str()),
                                cite(f.event_sequence)
                            );
                        }
                    }
                }
            }
        }
        let _ = writeln!(out);
    }
    out
}

fn matrix_table(assessment: &RiskAssessment) -> String {
    let mut out = String::new();
    if assessment.matrix.rows.is_empty() {
        let _ = writeln!(out, "No vulnerabilities to rank.");
        return out;
    }
    let _ = writeln!(
        out,
        "| Rank | Vulnerability | Check | Domain | Severity | C/I/A | Impact | Quick fix | Composite | Locations |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|---|");
    for (i, r) in assessment.matrix.rows.iter().enumerate() {
        let record = assessment.classified.iter().find(|v| v.vuln_id == r.vuln_id);
        let cia = record.map_or(String::new(), |v| {
            let c = v.severity.cia_impact;
            format!(
                "{}/{}/{}",
                impact(c.confidentiality),
                impact(c.integrity),
                impact(c.availability)
            )
        });
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            i + 1,
            r.vuln_id,
            r.check_id,
            r.domain_id,
            r.severity,
            cia,
            r.impact_rank,
            if r.remediation_rank == 1 { "yes" } else { "no" },
            r.composite_rank,
            record.map_or(0, |v| v.locations.len())
        );
    }
    out
}

/// Remediation guidance in risk-matrix order.
pub fn remediations_section(assessment: &RiskAssessment) -> String {
    let mut out = String::new();
    if assessment.matrix.rows.is_empty() {
        let _ = writeln!(out, "No remediations required for the audited scope.");
        return out;
    }
    for r in &assessment.matrix.rows {
        let Some(v) = assessment.classified.iter().find(|v| v.vuln_id == r.vuln_id) else {
            continue;
        };
        let _ = writeln!(out, "### {} {} ({})", v.vuln_id, v.title, r.severity);
        let _ = writeln!(out);
        let _ = writeln!(out, "{}", v.remediation);
        let _ = writeln!(out);
        for l in &v.locations {
            let _ = writeln!(out, "- `{}`", cell(&location(&l.path, l.line)));
        }
        let cites: Vec<String> = v.event_sequences.iter().map(|s| cite(*s)).collect();
        let _ = writeln!(out, "- evidence: {}", cites.join(" "));
        let _ = writeln!(out);
    }
    out
}

fn practice_guidance(tag: &str) -> &'static str {
    match tag {
        "abuse-resistance" => "Rate-limit and bound every externally reachable operation.",
        "ai-guardrails" => "Treat model input and output as untrusted data at every boundary.",
        "credential-hygiene" => "Store credentials only as salted, slow hashes and rotate them.",
        "data-minimization" => "Collect, log and retain only the data a feature needs.",
        "dependency-hygiene" => "Declare, pin and continuously update every dependency.",
        "hardened-runtime" => "Run services with the smallest privileges and surface possible.",
        "input-handling" => "Validate input against allow-lists and keep it out of interpreters.",
        "least-privilege" => "Check authorization on the server for every object and action.",
        "observability" => "Log security-relevant events without logging secrets.",
        "pipeline-security" => "Run automated security checks in CI on every change.",
        "safe-error-handling" => "Fail closed and keep internal details out of error responses.",
        "secret-management" => "Keep secrets out of source control and load them from a secret store.",
        "secure-defaults" => "Ship production configuration with debug and insecure options off.",
        "session-hygiene" => "Use secure, http-only, expiring session tokens.",
        "strong-cryptography" => "Use vetted algorithms and libraries with current parameters.",
        "transport-encryption" => "Encrypt and authenticate every network connection.",
        _ => "Apply the remediations listed for the affected checks.",
    }
}

/// Practices whose failing checks recur in at least two domains.
pub fn best_practices_section(state: &AuditState, registry: &Registry) -> String {
    let mut by_tag: BTreeMap<&str, (BTreeSet<&str>, BTreeSet<&str>)> = BTreeMap::new();
    for f in &state.findings {
        if let Some(c) = registry.check(&f.finding.check_id) {
            let e = by_tag.entry(c.practice.as_str()).or_default();
            e.0.insert(c.domain_id.as_str());
            e.1.insert(c.check_id.as_str());
        }
    }
    let mut out = String::new();
    let recurring: Vec<_> = by_tag.iter().filter(|(_, (d, _))| d.len() >= 2).collect();
    if recurring.is_empty() {
        let _ = writeln!(out, "No practice gap recurred across two or more domains.");
        return out;
    }
    for (tag, (domains, checks)) in recurring {
        let _ = writeln!(out, "### {tag}");
        let _ = writeln!(out);
        let _ = writeln!(out, "{}", practice_guidance(tag));
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "- domains: {}",
            domains.iter().copied().collect::<Vec<_>>().join(", ")
        );
        let _ = writeln!(
            out,
            "- checks: {}",
            checks.iter().copied().collect::<Vec<_>>().join(", ")
        );
        let _ = writeln!(out);
    }
    out
}

/// Human-readable report with a fixed section order.
pub fn render_markdown(
    state: &AuditState,
    registry: &Registry,
    assessment: &RiskAssessment,
    meta: &RunMeta,
) -> Result<String, ReportError> {
    ensure_fresh(state, assessment)?;
    let mut out = String::new();
    let _ = writeln!(out, "# Security audit report");
    let _ = writeln!(out);
    let _ = writeln!(out, "- run outcome: {}", meta.outcome);
    let _ = writeln!(out, "- generated at: {}", meta.generated_at);
    let _ = writeln!(out, "- state hash: `{}`", state.state_hash);
    let _ = writeln!(out, "- registry digest: `{}`", meta.registry_digest);
    let _ = writeln!(out, "- events verified: {}", meta.events_verified);
    let _ = writeln!(out);

    let _ = writeln!(out, "## Executive summary");
    let _ = writeln!(out);
    out.push_str(&executive_summary(state, registry, assessment));
    let _ = writeln!(out);

    let checks = check_table(state, registry);
    let n = |s: CheckStatus| checks.iter().filter(|c| c.status == s).count();
    let _ = writeln!(out, "## Scope and coverage");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{} phases, {} tasks, {} domains, {} checks.",
        registry.phases().len(),
        registry.tasks().len(),
        registry.domains().len(),
        checks.len()
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "Tasks: {} done, {} blocked, {} in progress, {} todo.",
        state.count_status(TaskStatus::Done),
        state.count_status(TaskStatus::Blocked),
        state.count_status(TaskStatus::InProgress),
        state.count_status(TaskStatus::Todo)
    );
    let _ = writeln!(
        out,
        "Checks: {} pass, {} fail, {} not applicable.",
        n(CheckStatus::Pass),
        n(CheckStatus::Fail),
        n(CheckStatus::NotApplicable)
    );
    let _ = writeln!(out);
    let gaps = blocked_domains(state, registry);
    if gaps.is_empty() {
        let _ = writeln!(out, "Every domain task completed.");
    } else {
        let _ = writeln!(out, "Coverage gaps:");
        let _ = writeln!(out);
        for (domain, task, reason) in &gaps {
            let _ = writeln!(out, "- `{domain}`: task {task} blocked ({reason})");
        }
    }
    let other_blocked: Vec<_> = state
        .blocked_tasks()
        .filter(|t| !gaps.iter().any(|(_, id, _)| *id == t.task_id))
        .collect();
    if !other_blocked.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Other blocked tasks:");
        let _ = writeln!(out);
        for t in other_blocked {
            let _ = writeln!(
                out,
                "- {} ({}): {}",
                t.task_id,
                t.kind,
                t.block_reason.as_deref().unwrap_or("no reason recorded")
            );
        }
    }
    let _ = writeln!(out);

    let _ = writeln!(out, "## Findings by domain");
    let _ = writeln!(out);
    out.push_str(&findings_by_domain(state, registry));

    let _ = writeln!(out, "## Risk matrix");
    let _ = writeln!(out);
    out.push_str(&matrix_table(assessment));
    let _ = writeln!(out);

    let _ = writeln!(out, "## Technical remediations");
    let _ = writeln!(out);
    out.push_str(&remediations_section(assessment));
    let _ = writeln!(out);

    let _ = writeln!(out, "## Best practices");
    let _ = writeln!(out);
    out.push_str(&best_practices_section(state, registry));
    let _ = writeln!(out);

    let _ = writeln!(out, "## Appendix: event citations");
    let _ = writeln!(out);
    if state.findings.is_empty() {
        let _ = writeln!(out, "No findings were recorded.");
    } else {
        let _ = writeln!(out, "| Citation | Task | Check | Location |");
        let _ = writeln!(out, "|---|---|---|---|");
        for f in &state.findings {
            let e = f.finding.evidence.first();
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                cite(f.event_sequence),
                f.task_id,
                f.finding.check_id,
                cell(&e.map(|e| location(&e.path, e.line)).unwrap_or_default())
            );
        }
    }
    Ok(out)
}
