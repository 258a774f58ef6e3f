//! Deterministic execution of builtin rules.

use super::registry::{CheckDef, CheckMode, CompiledRule, Registry};
use super::snapshot::{read_text, RepoSnapshot};
use crate::risk::{CheckResult, CheckStatus, Evidence, Severity};

/// Longest excerpt kept for a matching line, in characters.
pub const EXCERPT_CHARS: usize = 160;
/// Most evidence locations listed for a file-presence failure.
pub const PRESENCE_EVIDENCE_LIMIT: usize = 5;

fn excerpt(line: &str) -> String {
    let t = line.trim();
    if t.chars().count() <= EXCERPT_CHARS {
        t.to_string()
    } else {
        let cut: String = t.chars().take(EXCERPT_CHARS).collect();
        format!("{cut}...")
    }
}

fn result(check: &CheckDef, status: CheckStatus, evidence: Vec<Evidence>, explanation: String) -> CheckResult {
    let failing = status == CheckStatus::Fail;
    CheckResult {
        check_id: check.check_id.clone(),
        status,
        severity: failing.then(|| Severity::new(check.default_severity, check.cia_impact)),
        evidence,
        explanation,
        remediation: if failing {
            check.remediation.clone()
        } else {
            String::new()
        },
    }
}

struct TextFiles {
    texts: Vec<(String, String)>,
    binary: usize,
}

fn load_texts<'a>(
    snapshot: &RepoSnapshot,
    paths: impl Iterator<Item = &'a String>,
) -> Result<TextFiles, (String, std::io::Error)> {
    let mut texts = Vec::new();
    let mut binary = 0;
    for p in paths {
        match read_text(&snapshot.absolute(p)) {
            Ok(Some(t)) => texts.push((p.clone(), t)),
            Ok(None) => binary += 1,
            Err(e) => return Err((p.clone(), e)),
        }
    }
    Ok(TextFiles { texts, binary })
}

fn binary_note(n: usize) -> String {
    if n == 0 {
        String::new()
    } else {
        format!(" {n} binary file(s) skipped.")
    }
}

/// Runs one builtin check against a snapshot.
///
/// Unreadable files turn the result into `not_applicable` with the reason in
/// the explanation rather than a silent pass.
pub fn run_builtin_check(check: &CheckDef, registry: &Registry, snapshot: &RepoSnapshot) -> CheckResult {
    let rule = match (check.mode, registry.compiled_rule(&check.check_id)) {
        (CheckMode::Builtin, Some(rule)) => rule,
        _ => {
            return result(
                check,
                CheckStatus::NotApplicable,
                vec![],
                "check has no builtin rule".into(),
            )
        }
    };
    let unreadable = |(path, e): (String, std::io::Error)| {
        result(
            check,
            CheckStatus::NotApplicable,
            vec![],
            format!("evidence could not be gathered: {path}: {e}"),
        )
    };

    match rule {
        CompiledRule::Pattern { files, pattern } => {
            let loaded = match load_texts(snapshot, snapshot.matching(files)) {
                Ok(l) => l,
                Err(e) => return unreadable(e),
            };
            if loaded.texts.is_empty() {
                return result(
                    check,
                    CheckStatus::NotApplicable,
                    vec![],
                    format!("no files in scope for this check.{}", binary_note(loaded.binary)),
                );
            }
            let mut evidence = Vec::new();
            for (path, text) in &loaded.texts {
                for (i, line) in text.lines().enumerate() {
                    if pattern.is_match(line) {
                        evidence.push(Evidence {
                            path: path.clone(),
                            line: Some(i as u64 + 1),
                            excerpt: excerpt(line),
                        });
                    }
                }
            }
            let scanned = loaded.texts.len();
            if evidence.is_empty() {
                result(
                    check,
                    CheckStatus::Pass,
                    vec![],
                    format!("pattern not found in {scanned} file(s).{}", binary_note(loaded.binary)),
                )
            } else {
                let n = evidence.len();
                result(
                    check,
                    CheckStatus::Fail,
                    evidence,
                    format!(
                        "{}: {n} match(es) in {scanned} scanned file(s).{}",
                        check.title,
                        binary_note(loaded.binary)
                    ),
                )
            }
        }
        CompiledRule::FilePresence { applies_if, require } => {
            let applicable: Vec<&String> = snapshot.matching(applies_if).collect();
            if applicable.is_empty() {
                return result(
                    check,
                    CheckStatus::NotApplicable,
                    vec![],
                    "no files in scope for this check.".into(),
                );
            }
            if let Some(found) = snapshot.matching(require).next() {
                return result(
                    check,
                    CheckStatus::Pass,
                    vec![],
                    format!("required file present: {found}."),
                );
            }
            let evidence = applicable
                .iter()
                .take(PRESENCE_EVIDENCE_LIMIT)
                .map(|p| Evidence {
                    path: (*p).clone(),
                    line: None,
                    excerpt: "no required companion file found in repository".into(),
                })
                .collect();
            result(
                check,
                CheckStatus::Fail,
                evidence,
                format!(
                    "{}: {} file(s) in scope, none of the required files exist.",
                    check.title,
                    applicable.len()
                ),
            )
        }
        CompiledRule::FileAbsence { files } => {
            let present: Vec<Evidence> = snapshot
                .matching(files)
                .map(|p| Evidence {
                    path: p.clone(),
                    line: None,
                    excerpt: "file should not be committed".into(),
                })
                .collect();
            if present.is_empty() {
                result(check, CheckStatus::Pass, vec![], "no forbidden files present.".into())
            } else {
                let n = present.len();
                result(
                    check,
                    CheckStatus::Fail,
                    present,
                    format!("{}: {n} forbidden file(s) present.", check.title),
                )
            }
        }
        CompiledRule::RequiredPattern { files, pattern } => {
            let loaded = match load_texts(snapshot, snapshot.matching(files)) {
                Ok(l) => l,
                Err(e) => return unreadable(e),
            };
            if loaded.texts.is_empty() {
                return result(
                    check,
                    CheckStatus::NotApplicable,
                    vec![],
                    format!("no files in scope for this check.{}", binary_note(loaded.binary)),
                );
            }
            let missing: Vec<Evidence> = loaded
                .texts
                .iter()
                .filter(|(_, text)| !text.lines().any(|l| pattern.is_match(l)))
                .map(|(path, _)| Evidence {
                    path: path.clone(),
                    line: None,
                    excerpt: "required pattern absent".into(),
                })
                .collect();
            if missing.is_empty() {
                result(
                    check,
                    CheckStatus::Pass,
                    vec![],
                    "required pattern present in every file in scope.".into(),
                )
            } else {
                let n = missing.len();
                result(
                    check,
                    CheckStatus::Fail,
                    missing,
                    format!("{}: {n} file(s) lack the required pattern.", check.title),
                )
            }
        }
    }
}

/// Splits a failing result into one finding per evidence location.
/// File-presence failures stay a single finding.
pub fn findings_for(result: &CheckResult, registry: &Registry) -> Vec<CheckResult> {
    if result.status != CheckStatus::Fail {
        return Vec::new();
    }
    let aggregate = matches!(
        registry.compiled_rule(&result.check_id),
        Some(CompiledRule::FilePresence { .. })
    );
    if aggregate || result.evidence.len() <= 1 {
        return vec![result.clone()];
    }
    result
        .evidence
        .iter()
        .map(|e| CheckResult {
            evidence: vec![e.clone()],
            ..result.clone()
        })
        .collect()
}
