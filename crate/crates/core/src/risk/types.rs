use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SeverityLevel {
    Info,
    Low,
    Medium,
    High,
    Critical,
}

impl SeverityLevel {
    pub const ALL_DESC: [SeverityLevel; 5] = [
        SeverityLevel::Critical,
        SeverityLevel::High,
        SeverityLevel::Medium,
        SeverityLevel::Low,
        SeverityLevel::Info,
    ];

    /// 0 for INFO up to 4 for CRITICAL.
    pub fn rank(self) -> u32 {
        self as u32
    }

    /// One level up, saturating at CRITICAL.
    pub fn elevated(self) -> Self {
        match self {
            SeverityLevel::Info => SeverityLevel::Low,
            SeverityLevel::Low => SeverityLevel::Medium,
            SeverityLevel::Medium => SeverityLevel::High,
            SeverityLevel::High | SeverityLevel::Critical => SeverityLevel::Critical,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SeverityLevel::Info => "INFO",
            SeverityLevel::Low => "LOW",
            SeverityLevel::Medium => "MEDIUM",
            SeverityLevel::High => "HIGH",
            SeverityLevel::Critical => "CRITICAL",
        }
    }
}

impl fmt::Display for SeverityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpactLevel {
    #[default]
    None,
    Partial,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CiaImpact {
    pub confidentiality: ImpactLevel,
    pub integrity: ImpactLevel,
    pub availability: ImpactLevel,
}

impl CiaImpact {
    pub const NONE: CiaImpact = CiaImpact {
        confidentiality: ImpactLevel::None,
        integrity: ImpactLevel::None,
        availability: ImpactLevel::None,
    };

    pub fn is_none(&self) -> bool {
        *self == Self::NONE
    }

    /// Number of dimensions with any impact (0..=3).
    pub fn impacted_dimensions(&self) -> u32 {
        [self.confidentiality, self.integrity, self.availability]
            .iter()
            .filter(|l| **l != ImpactLevel::None)
            .count() as u32
    }

    pub fn max(self, other: CiaImpact) -> CiaImpact {
        CiaImpact {
            confidentiality: self.confidentiality.max(other.confidentiality),
            integrity: self.integrity.max(other.integrity),
            availability: self.availability.max(other.availability),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Severity {
    pub level: SeverityLevel,
    pub cia_impact: CiaImpact,
}

impl Severity {
    pub fn new(level: SeverityLevel, cia_impact: CiaImpact) -> Self {
        Self { level, cia_impact }
    }

    /// INFO carries no CIA impact.
    pub fn is_consistent(&self) -> bool {
        self.level != SeverityLevel::Info || self.cia_impact.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "not_applicable",
        }
    }
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evidence {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
    #[serde(default)]
    pub excerpt: String,
}

/// Structured evidence object for one check. A failing result is also what a
/// finding is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckResult {
    pub check_id: String,
    pub status: CheckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
    #[serde(default)]
    pub evidence: Vec<Evidence>,
    pub explanation: String,
    #[serde(default)]
    pub remediation: String,
}

impl CheckResult {
    /// Checks the field-level invariants; returns a description of the first violation.
    pub fn shape_error(&self) -> Option<String> {
        if self.check_id.trim().is_empty() {
            return Some("check_id must be non-empty".into());
        }
        match self.status {
            CheckStatus::Fail => {
                let Some(sev) = &self.severity else {
                    return Some(format!("{}: failing result requires a severity", self.check_id));
                };
                if !sev.is_consistent() {
                    return Some(format!("{}: INFO severity must carry no CIA impact", self.check_id));
                }
                if self.evidence.is_empty() {
                    return Some(format!("{}: failing result requires evidence", self.check_id));
                }
                if self.remediation.trim().is_empty() {
                    return Some(format!("{}: failing result requires remediation", self.check_id));
                }
            }
            CheckStatus::Pass | CheckStatus::NotApplicable => {
                if self.severity.is_some() {
                    return Some(format!(
                        "{}: severity is only allowed on failing results",
                        self.check_id
                    ));
                }
            }
        }
        if let Some(ev) = self.evidence.iter().find(|e| e.path.trim().is_empty()) {
            return Some(format!("{}: evidence path must be non-empty ({ev:?})", self.check_id));
        }
        None
    }
}

/// A finding as admitted to the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedFinding {
    pub event_sequence: u64,
    pub task_id: String,
    pub finding: CheckResult,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_order_and_elevation() {
        assert!(SeverityLevel::Critical > SeverityLevel::High);
        assert!(SeverityLevel::Low > SeverityLevel::Info);
        assert_eq!(SeverityLevel::High.elevated(), SeverityLevel::Critical);
        assert_eq!(SeverityLevel::Critical.elevated(), SeverityLevel::Critical);
    }

    #[test]
    fn fail_requires_evidence() {
        let r = CheckResult {
            check_id: "SEC-01".into(),
            status: CheckStatus::Fail,
            severity: Some(Severity::new(SeverityLevel::High, CiaImpact::NONE)),
            evidence: vec![],
            explanation: "x".into(),
            remediation: "y".into(),
        };
        assert!(r.shape_error().unwrap().contains("evidence"));
    }

    #[test]
    fn wire_names() {
        let s = serde_json::to_string(&SeverityLevel::Critical).unwrap();
        assert_eq!(s, "\"CRITICAL\"");
        let s = serde_json::to_string(&CheckStatus::NotApplicable).unwrap();
        assert_eq!(s, "\"not_applicable\"");
    }
}
