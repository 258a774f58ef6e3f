//! Findings to inventory, classification, risk matrix and score.

mod types;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use types::*;

use crate::canonical::sha256_hex;
use crate::paths::normalize_evidence;
use crate::playbook::{Registry, ScoreWeights};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RiskError {
    #[error("finding at event {event_sequence} references unknown check {check_id}")]
    UnknownCheck { check_id: String, event_sequence: u64 },
    #[error("finding at event {event_sequence} for {check_id} carries no severity")]
    MissingSeverity { check_id: String, event_sequence: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerabilityRecord {
    pub vuln_id: String,
    pub check_ids: Vec<String>,
    pub domain_id: String,
    pub title: String,
    pub severity: Severity,
    pub locations: Vec<Evidence>,
    pub remediation: String,
    pub first_event_sequence: u64,
    pub event_sequences: Vec<u64>,
}

impl VulnerabilityRecord {
    pub fn primary_check(&self) -> &str {
        &self.check_ids[0]
    }
}

/// Stable id from the grouping key.
pub fn vuln_id(check_id: &str, primary_path: &str) -> String {
    let digest = sha256_hex(format!("{check_id}|{primary_path}").as_bytes());
    format!("V-{}", &digest[..12])
}

/// Groups findings by `(check_id, normalized primary path)`.
///
/// Records come out in key order. Locations are deduplicated on `(path, line)`
/// and sorted; the first excerpt seen for a location wins.
pub fn consolidate(findings: &[RecordedFinding], registry: &Registry) -> Result<Vec<VulnerabilityRecord>, RiskError> {
    let mut groups: BTreeMap<(String, String), VulnerabilityRecord> = BTreeMap::new();
    for rf in findings {
        let f = &rf.finding;
        let check = registry.check(&f.check_id).ok_or_else(|| RiskError::UnknownCheck {
            check_id: f.check_id.clone(),
            event_sequence: rf.event_sequence,
        })?;
        let severity = f.severity.ok_or_else(|| RiskError::MissingSeverity {
            check_id: f.check_id.clone(),
            event_sequence: rf.event_sequence,
        })?;
        let primary = f
            .evidence
            .first()
            .map(|e| normalize_evidence(&e.path))
            .unwrap_or_default();
        let key = (f.check_id.clone(), primary.clone());
        let record = groups.entry(key).or_insert_with(|| VulnerabilityRecord {
            vuln_id: vuln_id(&f.check_id, &primary),
            check_ids: vec![f.check_id.clone()],
            domain_id: check.domain_id.clone(),
            title: check.title.clone(),
            severity,
            locations: Vec::new(),
            remediation: String::new(),
            first_event_sequence: rf.event_sequence,
            event_sequences: Vec::new(),
        });
        record.severity = Severity::new(
            record.severity.level.max(severity.level),
            record.severity.cia_impact.max(severity.cia_impact),
        );
        record.first_event_sequence = record.first_event_sequence.min(rf.event_sequence);
        record.event_sequences.push(rf.event_sequence);
        if record.remediation.is_empty() {
            record.remediation = f.remediation.trim().to_string();
        }
        for e in &f.evidence {
            let path = normalize_evidence(&e.path);
            if !record.locations.iter().any(|l| l.path == path && l.line == e.line) {
                record.locations.push(Evidence {
                    path,
                    line: e.line,
                    excerpt: e.excerpt.clone(),
                });
            }
        }
    }
    let mut out: Vec<VulnerabilityRecord> = groups.into_values().collect();
    for r in &mut out {
        r.locations.sort_by(|a, b| (&a.path, a.line).cmp(&(&b.path, b.line)));
        r.event_sequences.sort_unstable();
        r.event_sequences.dedup();
        if r.remediation.is_empty() {
            r.remediation = registry
                .check(r.primary_check())
                .map(|c| c.remediation.clone())
                .unwrap_or_default();
        }
    }
    Ok(out)
}

/// Registry default severity, raised one level when confidentiality or
/// integrity impact is full. An INFO default with a non-empty CIA impact is
/// raised to LOW so the result stays a consistent severity.
pub fn classify(record: &VulnerabilityRecord, registry: &Registry) -> Severity {
    let cia = record.severity.cia_impact;
    let mut level = registry
        .check(record.primary_check())
        .map(|c| c.default_severity)
        .unwrap_or(record.severity.level);
    if cia.confidentiality == ImpactLevel::Full || cia.integrity == ImpactLevel::Full {
        level = level.elevated();
    }
    if level == SeverityLevel::Info && !cia.is_none() {
        level = SeverityLevel::Low;
    }
    Severity::new(level, cia)
}

/// Consolidated records with their severity replaced by the classified one.
pub fn classify_inventory(inventory: &[VulnerabilityRecord], registry: &Registry) -> Vec<VulnerabilityRecord> {
    inventory
        .iter()
        .map(|r| VulnerabilityRecord {
            severity: classify(r, registry),
            ..r.clone()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub vuln_id: String,
    pub check_id: String,
    pub domain_id: String,
    pub severity: SeverityLevel,
    /// Number of CIA dimensions with a non-none impact.
    pub impact_rank: u32,
    /// 1 for a quick fix: remediation present and few locations.
    pub remediation_rank: u32,
    /// `severity * 100 + impact * 10 + remediation`; orders the same way as
    /// the lexicographic triple.
    pub composite_rank: u32,
}

impl MatrixRow {
    pub fn key(&self) -> (u32, u32, u32) {
        (self.severity.rank(), self.impact_rank, self.remediation_rank)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskMatrix {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_state_hash: Option<String>,
    pub quick_fix_threshold: u32,
    pub rows: Vec<MatrixRow>,
}

pub fn matrix_row(record: &VulnerabilityRecord, quick_fix_threshold: u32) -> MatrixRow {
    let impact_rank = record.severity.cia_impact.impacted_dimensions();
    let quick = !record.remediation.trim().is_empty() && record.locations.len() as u64 <= quick_fix_threshold as u64;
    let remediation_rank = u32::from(quick);
    MatrixRow {
        vuln_id: record.vuln_id.clone(),
        check_id: record.primary_check().to_string(),
        domain_id: record.domain_id.clone(),
        severity: record.severity.level,
        impact_rank,
        remediation_rank,
        composite_rank: record.severity.level.rank() * 100 + impact_rank * 10 + remediation_rank,
    }
}

/// Rows sorted by composite rank descending, ties by vuln id ascending.
pub fn build_matrix(inventory: &[VulnerabilityRecord], quick_fix_threshold: u32) -> RiskMatrix {
    let mut rows: Vec<MatrixRow> = inventory.iter().map(|r| matrix_row(r, quick_fix_threshold)).collect();
    rows.sort_by(|a, b| b.key().cmp(&a.key()).then_with(|| a.vuln_id.cmp(&b.vuln_id)));
    RiskMatrix {
        source_state_hash: None,
        quick_fix_threshold,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deduction {
    pub level: SeverityLevel,
    pub count: u32,
    pub weight: u32,
    pub subtotal: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityScore {
    pub value: u32,
    pub total_deduction: u32,
    pub deductions: Vec<Deduction>,
}

/// `clamp(100 - sum(count * weight), 0, 100)`, itemized from CRITICAL down.
pub fn compute_score(inventory: &[VulnerabilityRecord], weights: &ScoreWeights) -> SecurityScore {
    let deductions: Vec<Deduction> = SeverityLevel::ALL_DESC
        .iter()
        .map(|&level| {
            let count = inventory.iter().filter(|r| r.severity.level == level).count() as u32;
            let weight = weights.weight(level);
            Deduction {
                level,
                count,
                weight,
                subtotal: count.saturating_mul(weight),
            }
        })
        .collect();
    let total = deductions.iter().fold(0u32, |acc, d| acc.saturating_add(d.subtotal));
    SecurityScore {
        value: 100u32.saturating_sub(total),
        total_deduction: total,
        deductions,
    }
}

/// The whole cascade over projected findings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub inventory: Vec<VulnerabilityRecord>,
    pub classified: Vec<VulnerabilityRecord>,
    pub matrix: RiskMatrix,
    pub score: SecurityScore,
}

pub fn assess(
    findings: &[RecordedFinding],
    registry: &Registry,
    quick_fix_threshold: u32,
    state_hash: Option<&str>,
) -> Result<RiskAssessment, RiskError> {
    let inventory = consolidate(findings, registry)?;
    let classified = classify_inventory(&inventory, registry);
    let mut matrix = build_matrix(&classified, quick_fix_threshold);
    matrix.source_state_hash = state_hash.map(str::to_string);
    let score = compute_score(&classified, &registry.score_weights());
    Ok(RiskAssessment {
        inventory,
        classified,
        matrix,
        score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finding(seq: u64, check: &str, path: &str, line: u64, level: SeverityLevel, cia: CiaImpact) -> RecordedFinding {
        RecordedFinding {
            event_sequence: seq,
            task_id: "T4".into(),
            finding: CheckResult {
                check_id: check.into(),
                status: CheckStatus::Fail,
                severity: Some(Severity::new(level, cia)),
                evidence: vec![Evidence {
                    path: path.into(),
                    line: Some(line),
                    excerpt: String::new(),
                }],
                explanation: "e".into(),
                remediation: "fix it".into(),
            },
        }
    }

    fn record(id: &str, level: SeverityLevel, cia: CiaImpact) -> VulnerabilityRecord {
        VulnerabilityRecord {
            vuln_id: id.into(),
            check_ids: vec!["SEC-01".into()],
            domain_id: "secrets_config".into(),
            title: "t".into(),
            severity: Severity::new(level, cia),
            locations: vec![],
            remediation: String::new(),
            first_event_sequence: 0,
            event_sequences: vec![0],
        }
    }

    const C_FULL: CiaImpact = CiaImpact {
        confidentiality: ImpactLevel::Full,
        integrity: ImpactLevel::None,
        availability: ImpactLevel::None,
    };

    #[test]
    fn same_check_same_file_merges() {
        let r = Registry::shipped();
        let fs = vec![
            finding(
                5,
                "SEC-05",
                "config/app.yaml",
                1,
                SeverityLevel::Medium,
                CiaImpact::NONE,
            ),
            finding(6, "SEC-05", "./config/app.yaml", 4, SeverityLevel::Low, C_FULL),
        ];
        let inv = consolidate(&fs, &r).unwrap();
        assert_eq!(inv.len(), 1);
        assert_eq!(inv[0].locations.len(), 2);
        assert_eq!(inv[0].severity.level, SeverityLevel::Medium);
        assert_eq!(inv[0].severity.cia_impact, C_FULL);
        assert_eq!(inv[0].first_event_sequence, 5);
        assert_eq!(inv[0].vuln_id, vuln_id("SEC-05", "config/app.yaml"));
    }

    #[test]
    fn empty_inventory() {
        let r = Registry::shipped();
        assert!(consolidate(&[], &r).unwrap().is_empty());
        assert_eq!(compute_score(&[], &ScoreWeights::default()).value, 100);
    }

    #[test]
    fn unknown_check_is_error() {
        let r = Registry::shipped();
        let fs = vec![finding(1, "NOPE-1", "a", 1, SeverityLevel::Low, CiaImpact::NONE)];
        assert!(matches!(consolidate(&fs, &r), Err(RiskError::UnknownCheck { .. })));
    }

    #[test]
    fn credential_elevates_to_critical() {
        let r = Registry::shipped();
        let fs = vec![finding(1, "SEC-01", "app/settings.py", 3, SeverityLevel::High, C_FULL)];
        let inv = consolidate(&fs, &r).unwrap();
        let s = classify(&inv[0], &r);
        assert_eq!(s.level, SeverityLevel::Critical);
        let again = classify_inventory(&classify_inventory(&inv, &r), &r);
        assert_eq!(again, classify_inventory(&inv, &r));
    }

    #[test]
    fn matrix_ordering() {
        let full = CiaImpact {
            confidentiality: ImpactLevel::Full,
            integrity: ImpactLevel::Partial,
            availability: ImpactLevel::Partial,
        };
        let inv = vec![
            record("V-a", SeverityLevel::Low, CiaImpact::NONE),
            record("V-b", SeverityLevel::Critical, CiaImpact::NONE),
            record("V-c", SeverityLevel::High, C_FULL),
            record("V-d", SeverityLevel::High, full),
        ];
        let m = build_matrix(&inv, 3);
        let ids: Vec<&str> = m.rows.iter().map(|r| r.vuln_id.as_str()).collect();
        assert_eq!(ids, ["V-b", "V-d", "V-c", "V-a"]);
    }

    #[test]
    fn score_examples() {
        let w = ScoreWeights::default();
        let crit: Vec<_> = (0..4)
            .map(|i| record(&format!("V-{i}"), SeverityLevel::Critical, CiaImpact::NONE))
            .collect();
        assert_eq!(compute_score(&crit, &w).value, 0);
        let mut mixed = vec![record("a", SeverityLevel::High, CiaImpact::NONE)];
        mixed.extend((0..2).map(|_| record("b", SeverityLevel::Medium, CiaImpact::NONE)));
        mixed.extend((0..3).map(|_| record("c", SeverityLevel::Low, CiaImpact::NONE)));
        let s = compute_score(&mixed, &w);
        assert_eq!(s.value, 79);
        assert_eq!(s.total_deduction, 21);
    }
}
