//! The encoded audit coverage: phases, domains, checks and tasks.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use globset::{Glob, GlobSet, GlobSetBuilder};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::paths;
use crate::risk::{CiaImpact, SeverityLevel};

/// Paths written by the report renderer rather than by any task.
pub const FINAL_REPORT_MD: &str = "reports/final/report.md";
pub const FINAL_REPORT_JSON: &str = "reports/final/report.json";

pub const EXPECTED_PHASES: usize = 4;
pub const EXPECTED_DOMAINS: usize = 16;
pub const EXPECTED_CHECKS: usize = 95;
pub const EXPECTED_TASKS: usize = 26;

/// The shipped default registry.
pub const DEFAULT_REGISTRY_JSON: &str = include_str!("../../assets/registry.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDef {
    pub phase: u8,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainDef {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    Builtin,
    Agent,
}

/// Rule language for deterministic checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleSpec {
    /// Fails on every line matching `pattern` in files matching `globs`.
    Pattern { globs: Vec<String>, pattern: String },
    /// Applies when any file matches `applies_if_globs`; fails unless a file matches `require_globs`.
    FilePresence {
        applies_if_globs: Vec<String>,
        require_globs: Vec<String>,
    },
    /// Fails for every file matching `globs`.
    FileAbsence { globs: Vec<String> },
    /// Fails for every file matching `globs` that has no line matching `pattern`.
    RequiredPattern { globs: Vec<String>, pattern: String },
}

impl RuleSpec {
    /// Every glob the rule looks at.
    pub fn globs(&self) -> Vec<&str> {
        let v: Vec<&String> = match self {
            RuleSpec::Pattern { globs, .. }
            | RuleSpec::FileAbsence { globs }
            | RuleSpec::RequiredPattern { globs, .. } => globs.iter().collect(),
            RuleSpec::FilePresence {
                applies_if_globs,
                require_globs,
            } => applies_if_globs.iter().chain(require_globs.iter()).collect(),
        };
        v.into_iter().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckDef {
    pub check_id: String,
    pub domain_id: String,
    pub title: String,
    pub mode: CheckMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin_rule: Option<RuleSpec>,
    pub default_severity: SeverityLevel,
    pub cia_impact: CiaImpact,
    pub practice: String,
    pub remediation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ReconStack,
    ReconArchitecture,
    ReconAttackSurface,
    DomainAudit,
    VulnerabilityInventory,
    SeverityClassification,
    RiskMatrix,
    TechnicalRemediations,
    BestPractices,
    ExecutiveSummary,
    FinalReport,
}

impl TaskKind {
    pub const ALL: [TaskKind; 11] = [
        TaskKind::ReconStack,
        TaskKind::ReconArchitecture,
        TaskKind::ReconAttackSurface,
        TaskKind::DomainAudit,
        TaskKind::VulnerabilityInventory,
        TaskKind::SeverityClassification,
        TaskKind::RiskMatrix,
        TaskKind::TechnicalRemediations,
        TaskKind::BestPractices,
        TaskKind::ExecutiveSummary,
        TaskKind::FinalReport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::ReconStack => "recon_stack",
            TaskKind::ReconArchitecture => "recon_architecture",
            TaskKind::ReconAttackSurface => "recon_attack_surface",
            TaskKind::DomainAudit => "domain_audit",
            TaskKind::VulnerabilityInventory => "vulnerability_inventory",
            TaskKind::SeverityClassification => "severity_classification",
            TaskKind::RiskMatrix => "risk_matrix",
            TaskKind::TechnicalRemediations => "technical_remediations",
            TaskKind::BestPractices => "best_practices",
            TaskKind::ExecutiveSummary => "executive_summary",
            TaskKind::FinalReport => "final_report",
        }
    }

    /// Phase the kind belongs to.
    pub fn phase(self) -> u8 {
        match self {
            TaskKind::ReconStack | TaskKind::ReconArchitecture | TaskKind::ReconAttackSurface => 1,
            TaskKind::DomainAudit => 2,
            TaskKind::VulnerabilityInventory | TaskKind::SeverityClassification | TaskKind::RiskMatrix => 3,
            TaskKind::TechnicalRemediations
            | TaskKind::BestPractices
            | TaskKind::ExecutiveSummary
            | TaskKind::FinalReport => 4,
        }
    }

    /// Path of the structured artifact the orchestrator attaches on completion.
    pub fn kernel_artifact(self, domain_id: Option<&str>) -> String {
        match self {
            TaskKind::ReconStack => "reports/phase1/stack.json".into(),
            TaskKind::ReconArchitecture => "reports/phase1/architecture.json".into(),
            TaskKind::ReconAttackSurface => "reports/phase1/attack_surface.json".into(),
            TaskKind::DomainAudit => {
                format!("reports/phase2/{}/results.json", domain_id.unwrap_or("unknown"))
            }
            TaskKind::VulnerabilityInventory => "reports/phase3/inventory.json".into(),
            TaskKind::SeverityClassification => "reports/phase3/classification.json".into(),
            TaskKind::RiskMatrix => "reports/phase3/risk_matrix.json".into(),
            TaskKind::TechnicalRemediations => "reports/phase4/remediations.md".into(),
            TaskKind::BestPractices => "reports/phase4/best_practices.md".into(),
            TaskKind::ExecutiveSummary => "reports/phase4/executive_summary.md".into(),
            TaskKind::FinalReport => "reports/final/artifact_index.json".into(),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDef {
    pub task_id: String,
    pub phase: u8,
    pub kind: TaskKind,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_id: Option<String>,
    #[serde(default)]
    pub depends_on: Vec<String>,
    /// Path prefixes (under `reports/`) the task may write.
    pub boundary: Vec<String>,
    /// Extra repository globs for context excerpts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context_globs: Vec<String>,
}

impl TaskDef {
    /// Id of the task-level verification check used by tasks without registry checks.
    pub fn verification_check_id(&self) -> String {
        format!("{}.verify", self.task_id)
    }

    pub fn kernel_artifact(&self) -> String {
        self.kind.kernel_artifact(self.domain_id.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreWeights {
    #[serde(rename = "CRITICAL")]
    pub critical: u32,
    #[serde(rename = "HIGH")]
    pub high: u32,
    #[serde(rename = "MEDIUM")]
    pub medium: u32,
    #[serde(rename = "LOW")]
    pub low: u32,
    #[serde(rename = "INFO")]
    pub info: u32,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            critical: 25,
            high: 10,
            medium: 4,
            low: 1,
            info: 0,
        }
    }
}

impl ScoreWeights {
    pub fn weight(&self, level: SeverityLevel) -> u32 {
        match level {
            SeverityLevel::Critical => self.critical,
            SeverityLevel::High => self.high,
            SeverityLevel::Medium => self.medium,
            SeverityLevel::Low => self.low,
            SeverityLevel::Info => self.info,
        }
    }
}

/// Serialized registry document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryDoc {
    pub version: u32,
    pub phases: Vec<PhaseDef>,
    pub domains: Vec<DomainDef>,
    pub checks: Vec<CheckDef>,
    pub tasks: Vec<TaskDef>,
    #[serde(default)]
    pub score_weights: ScoreWeights,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("cannot read registry {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("registry is not valid: {0}")]
    Parse(String),
    #[error("{what}: expected {expected}, found {found}")]
    Count {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("duplicate {what} id {id}")]
    Duplicate { what: &'static str, id: String },
    #[error("phases must be numbered 1..=4 in order")]
    PhaseNumbering,
    #[error("{owner} references unknown domain {domain}")]
    UnknownDomain { owner: String, domain: String },
    #[error("task {task} depends on unknown task {dependency}")]
    UnknownDependency { task: String, dependency: String },
    #[error("dependency cycle through task {0}")]
    DependencyCycle(String),
    #[error("phase order: task {task} (phase {phase}) depends on {dependency} (phase {dependency_phase})")]
    PhaseOrder {
        task: String,
        phase: u8,
        dependency: String,
        dependency_phase: u8,
    },
    #[error("domain mapping: {0}")]
    DomainMapping(String),
    #[error("task {task}: {reason}")]
    InvalidTask { task: String, reason: String },
    #[error("check {check}: {reason}")]
    InvalidCheck { check: String, reason: String },
}

/// Compiled form of a rule, ready to run against a repository snapshot.
#[derive(Debug, Clone)]
pub enum CompiledRule {
    Pattern { files: GlobSet, pattern: Regex },
    FilePresence { applies_if: GlobSet, require: GlobSet },
    FileAbsence { files: GlobSet },
    RequiredPattern { files: GlobSet, pattern: Regex },
}

pub(crate) fn compile_globs(globs: &[String]) -> Result<GlobSet, String> {
    let mut builder = GlobSetBuilder::new();
    for g in globs {
        builder.add(Glob::new(g).map_err(|e| format!("glob {g:?}: {e}"))?);
    }
    builder.build().map_err(|e| e.to_string())
}

fn compile_rule(rule: &RuleSpec) -> Result<CompiledRule, String> {
    let regex = |p: &str| Regex::new(p).map_err(|e| format!("pattern {p:?}: {e}"));
    Ok(match rule {
        RuleSpec::Pattern { globs, pattern } => CompiledRule::Pattern {
            files: compile_globs(globs)?,
            pattern: regex(pattern)?,
        },
        RuleSpec::FilePresence {
            applies_if_globs,
            require_globs,
        } => CompiledRule::FilePresence {
            applies_if: compile_globs(applies_if_globs)?,
            require: compile_globs(require_globs)?,
        },
        RuleSpec::FileAbsence { globs } => CompiledRule::FileAbsence {
            files: compile_globs(globs)?,
        },
        RuleSpec::RequiredPattern { globs, pattern } => CompiledRule::RequiredPattern {
            files: compile_globs(globs)?,
            pattern: regex(pattern)?,
        },
    })
}

/// A validated registry. Immutable after load.
#[derive(Debug, Clone)]
pub struct Registry {
    doc: RegistryDoc,
    digest: String,
    task_index: HashMap<String, usize>,
    check_index: HashMap<String, usize>,
    domain_index: HashMap<String, usize>,
    rules: HashMap<String, CompiledRule>,
}

impl Registry {
    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn shipped() -> Self {
        static SHIPPED: std::sync::OnceLock<Registry> = std::sync::OnceLock::new();
        SHIPPED
            .get_or_init(|| Self::from_json(DEFAULT_REGISTRY_JSON).expect("shipped registry is valid"))
            .clone()
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let doc: RegistryDoc = serde_json::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        Self::from_doc(doc)
    }

    pub fn from_doc(doc: RegistryDoc) -> Result<Self, RegistryError> {
        validate_counts(&doc)?;
        let domain_index = index_unique(doc.domains.iter().map(|d| d.id.as_str()), "domain")?;
        let check_index = index_unique(doc.checks.iter().map(|c| c.check_id.as_str()), "check")?;
        let task_index = index_unique(doc.tasks.iter().map(|t| t.task_id.as_str()), "task")?;

        if doc.phases.iter().enumerate().any(|(i, p)| p.phase as usize != i + 1) {
            return Err(RegistryError::PhaseNumbering);
        }

        let mut rules = HashMap::new();
        for check in &doc.checks {
            if !domain_index.contains_key(&check.domain_id) {
                return Err(RegistryError::UnknownDomain {
                    owner: format!("check {}", check.check_id),
                    domain: check.domain_id.clone(),
                });
            }
            let invalid = |reason: &str| RegistryError::InvalidCheck {
                check: check.check_id.clone(),
                reason: reason.to_string(),
            };
            if check.check_id.ends_with(".verify") {
                return Err(invalid("the .verify suffix is reserved for task verification"));
            }
            if check.default_severity == SeverityLevel::Info && !check.cia_impact.is_none() {
                return Err(invalid("INFO checks must carry no CIA impact"));
            }
            match (check.mode, &check.builtin_rule) {
                (CheckMode::Builtin, Some(rule)) => {
                    let compiled = compile_rule(rule).map_err(|e| invalid(&e))?;
                    rules.insert(check.check_id.clone(), compiled);
                }
                (CheckMode::Builtin, None) => return Err(invalid("builtin check without a rule")),
                (CheckMode::Agent, Some(_)) => return Err(invalid("agent check must not carry a rule")),
                (CheckMode::Agent, None) => {}
            }
        }

        validate_tasks(&doc, &task_index, &domain_index)?;

        let digest = canonical::digest(&doc).map_err(|e| RegistryError::Parse(e.to_string()))?;
        Ok(Self {
            doc,
            digest,
            task_index,
            check_index,
            domain_index,
            rules,
        })
    }

    pub fn doc(&self) -> &RegistryDoc {
        &self.doc
    }

    /// SHA-256 of the canonical registry document.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn phases(&self) -> &[PhaseDef] {
        &self.doc.phases
    }

    pub fn domains(&self) -> &[DomainDef] {
        &self.doc.domains
    }

    pub fn checks(&self) -> &[CheckDef] {
        &self.doc.checks
    }

    pub fn tasks(&self) -> &[TaskDef] {
        &self.doc.tasks
    }

    pub fn score_weights(&self) -> ScoreWeights {
        self.doc.score_weights
    }

    pub fn task(&self, id: &str) -> Option<&TaskDef> {
        self.task_index.get(id).map(|&i| &self.doc.tasks[i])
    }

    /// Declaration position of a task.
    pub fn task_position(&self, id: &str) -> Option<usize> {
        self.task_index.get(id).copied()
    }

    pub fn check(&self, id: &str) -> Option<&CheckDef> {
        self.check_index.get(id).map(|&i| &self.doc.checks[i])
    }

    pub fn domain(&self, id: &str) -> Option<&DomainDef> {
        self.domain_index.get(id).map(|&i| &self.doc.domains[i])
    }

    pub fn phase_name(&self, phase: u8) -> &str {
        self.doc
            .phases
            .get(phase as usize - 1)
            .map(|p| p.name.as_str())
            .unwrap_or("unknown")
    }

    pub fn compiled_rule(&self, check_id: &str) -> Option<&CompiledRule> {
        self.rules.get(check_id)
    }

    pub fn domain_checks<'a, 'b>(&'a self, domain_id: &'b str) -> impl Iterator<Item = &'a CheckDef> + use<'a, 'b> {
        self.doc.checks.iter().filter(move |c| c.domain_id == domain_id)
    }

    /// Registry checks audited by a task, in declaration order.
    pub fn task_checks(&self, task: &TaskDef) -> Vec<&CheckDef> {
        match &task.domain_id {
            Some(d) => self.domain_checks(d).collect(),
            None => Vec::new(),
        }
    }

    /// Check ids a completion for `task` must report.
    pub fn required_check_ids(&self, task: &TaskDef) -> BTreeSet<String> {
        let checks = self.task_checks(task);
        if checks.is_empty() {
            BTreeSet::from([task.verification_check_id()])
        } else {
            checks.into_iter().map(|c| c.check_id.clone()).collect()
        }
    }

    pub fn domain_task(&self, domain_id: &str) -> Option<&TaskDef> {
        self.doc
            .tasks
            .iter()
            .find(|t| t.domain_id.as_deref() == Some(domain_id))
    }

    /// All transitive dependencies of a task.
    pub fn transitive_dependencies(&self, id: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![id.to_string()];
        while let Some(cur) = stack.pop() {
            if let Some(task) = self.task(&cur) {
                for dep in &task.depends_on {
                    if seen.insert(dep.clone()) {
                        stack.push(dep.clone());
                    }
                }
            }
        }
        seen
    }
}

fn validate_counts(doc: &RegistryDoc) -> Result<(), RegistryError> {
    let counts = [
        ("phases", EXPECTED_PHASES, doc.phases.len()),
        ("domains", EXPECTED_DOMAINS, doc.domains.len()),
        ("checks", EXPECTED_CHECKS, doc.checks.len()),
        ("tasks", EXPECTED_TASKS, doc.tasks.len()),
    ];
    for (what, expected, found) in counts {
        if expected != found {
            return Err(RegistryError::Count { what, expected, found });
        }
    }
    Ok(())
}

fn index_unique<'a>(
    ids: impl Iterator<Item = &'a str>,
    what: &'static str,
) -> Result<HashMap<String, usize>, RegistryError> {
    let mut index = HashMap::new();
    for (i, id) in ids.enumerate() {
        if index.insert(id.to_string(), i).is_some() {
            return Err(RegistryError::Duplicate {
                what,
                id: id.to_string(),
            });
        }
    }
    Ok(index)
}

fn validate_tasks(
    doc: &RegistryDoc,
    task_index: &HashMap<String, usize>,
    domain_index: &HashMap<String, usize>,
) -> Result<(), RegistryError> {
    let mut domain_owner: BTreeMap<&str, &str> = BTreeMap::new();
    for task in &doc.tasks {
        let invalid = |reason: String| RegistryError::InvalidTask {
            task: task.task_id.clone(),
            reason,
        };
        if !(1..=EXPECTED_PHASES as u8).contains(&task.phase) {
            return Err(invalid(format!("phase {} out of range", task.phase)));
        }
        if task.kind.phase() != task.phase {
            return Err(invalid(format!(
                "kind {} belongs to phase {}",
                task.kind,
                task.kind.phase()
            )));
        }
        match (&task.domain_id, task.phase) {
            (Some(d), 2) => {
                if !domain_index.contains_key(d) {
                    return Err(RegistryError::UnknownDomain {
                        owner: format!("task {}", task.task_id),
                        domain: d.clone(),
                    });
                }
                if let Some(prev) = domain_owner.insert(d, &task.task_id) {
                    return Err(RegistryError::DomainMapping(format!(
                        "domain {d} is audited by both {prev} and {}",
                        task.task_id
                    )));
                }
            }
            (None, 2) => {
                return Err(RegistryError::DomainMapping(format!(
                    "phase-2 task {} has no domain",
                    task.task_id
                )))
            }
            (Some(_), _) => {
                return Err(RegistryError::DomainMapping(format!(
                    "only phase-2 tasks map to domains ({})",
                    task.task_id
                )))
            }
            (None, _) => {}
        }
        if task.boundary.is_empty() {
            return Err(invalid("empty boundary".into()));
        }
        for prefix in &task.boundary {
            let ok = prefix.starts_with("reports/")
                && prefix.ends_with('/')
                && paths::strict_relative(prefix.trim_end_matches('/')).is_some();
            if !ok {
                return Err(invalid(format!(
                    "boundary prefix {prefix:?} must be a directory under reports/"
                )));
            }
        }
        let kernel = task.kernel_artifact();
        if !task.boundary.iter().any(|p| kernel.starts_with(p.as_str())) {
            return Err(invalid(format!("boundary does not admit the task artifact {kernel}")));
        }
        if let Err(e) = compile_globs(&task.context_globs) {
            return Err(invalid(e));
        }
        for dep in &task.depends_on {
            let Some(&di) = task_index.get(dep) else {
                return Err(RegistryError::UnknownDependency {
                    task: task.task_id.clone(),
                    dependency: dep.clone(),
                });
            };
            let dep_phase = doc.tasks[di].phase;
            if dep_phase > task.phase {
                return Err(RegistryError::PhaseOrder {
                    task: task.task_id.clone(),
                    phase: task.phase,
                    dependency: dep.clone(),
                    dependency_phase: dep_phase,
                });
            }
        }
    }
    let phase2 = doc.tasks.iter().filter(|t| t.phase == 2).count();
    if phase2 != EXPECTED_DOMAINS {
        return Err(RegistryError::DomainMapping(format!(
            "phase 2 must hold one task per domain ({EXPECTED_DOMAINS}), found {phase2}"
        )));
    }
    detect_cycle(doc, task_index)
}

fn detect_cycle(doc: &RegistryDoc, task_index: &HashMap<String, usize>) -> Result<(), RegistryError> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut mark = vec![0u8; doc.tasks.len()];
    fn visit(
        i: usize,
        doc: &RegistryDoc,
        index: &HashMap<String, usize>,
        mark: &mut [u8],
    ) -> Result<(), RegistryError> {
        match mark[i] {
            1 => return Err(RegistryError::DependencyCycle(doc.tasks[i].task_id.clone())),
            2 => return Ok(()),
            _ => {}
        }
        mark[i] = 1;
        for dep in &doc.tasks[i].depends_on {
            visit(index[dep], doc, index, mark)?;
        }
        mark[i] = 2;
        Ok(())
    }
    for i in 0..doc.tasks.len() {
        visit(i, doc, task_index, &mut mark)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> RegistryDoc {
        serde_json::from_str(DEFAULT_REGISTRY_JSON).unwrap()
    }

    #[test]
    fn shipped_counts() {
        let r = Registry::shipped();
        assert_eq!(r.phases().len(), 4);
        assert_eq!(r.tasks().len(), 26);
        assert_eq!(r.domains().len(), 16);
        assert_eq!(r.checks().len(), 95);
        assert_eq!(r.tasks().iter().filter(|t| t.phase == 2).count(), 16);
    }

    #[test]
    fn missing_check_is_count_error() {
        let mut d = doc();
        d.checks.pop();
        let err = Registry::from_doc(d).unwrap_err();
        assert!(err.to_string().starts_with("checks: expected 95"), "{err}");
    }

    #[test]
    fn phase_order_violation() {
        let mut d = doc();
        // a phase-3 task depending on the phase-4 final report task
        let t20 = d.tasks.iter_mut().find(|t| t.task_id == "T20").unwrap();
        t20.depends_on.push("T26".into());
        assert!(matches!(Registry::from_doc(d), Err(RegistryError::PhaseOrder { .. })));
    }

    #[test]
    fn cycle_detected() {
        let mut d = doc();
        d.tasks[0].depends_on.push("T3".into());
        assert!(matches!(Registry::from_doc(d), Err(RegistryError::DependencyCycle(_))));
    }

    #[test]
    fn unknown_domain_reference() {
        let mut d = doc();
        d.checks[10].domain_id = "nowhere".into();
        assert!(matches!(
            Registry::from_doc(d),
            Err(RegistryError::UnknownDomain { .. })
        ));
    }

    #[test]
    fn boundary_must_admit_kernel_artifact() {
        let mut d = doc();
        d.tasks[0].boundary = vec!["reports/phase2/".into()];
        let err = Registry::from_doc(d).unwrap_err();
        assert!(err.to_string().contains("reports/phase1/stack.json"), "{err}");
    }

    #[test]
    fn bad_regex_rejected() {
        let mut d = doc();
        let c = d.checks.iter_mut().find(|c| c.mode == CheckMode::Builtin).unwrap();
        c.builtin_rule = Some(RuleSpec::Pattern {
            globs: vec!["**/*".into()],
            pattern: "(unclosed".into(),
        });
        assert!(matches!(Registry::from_doc(d), Err(RegistryError::InvalidCheck { .. })));
    }

    #[test]
    fn verification_check_for_non_domain_tasks() {
        let r = Registry::shipped();
        let t1 = r.task("T1").unwrap();
        assert_eq!(r.required_check_ids(t1), BTreeSet::from(["T1.verify".to_string()]));
        let t4 = r.task("T4").unwrap();
        assert_eq!(r.required_check_ids(t4).len(), 6);
    }
}
