//! The run loop and operator commands.

mod config;
mod diagnostics;
mod kernel;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agents::{self, Agent, DispatchError, ScriptedAgent};
use crate::canonical::{self, sha256_hex, CanonicalError};
use crate::event_store::{self, Event, EventKind, EventLog, StoreError};
use crate::playbook::{
    build_context, eligible_tasks, ContextError, ContextSources, Registry, RegistryError, RepoSnapshot, TaskDef,
    FINAL_REPORT_JSON, FINAL_REPORT_MD,
};
use crate::projection::{
    self, AuditState, ProjectionError, RecordedMatch, TaskStatus, VerificationResult, OPERATOR_ACTOR,
    ORCHESTRATOR_ACTOR,
};
use crate::protocol::{self, Action, ProposedEvent, Rejection, RejectionCode};
use crate::report::{self, ReportError, RunMeta};
use crate::risk::{RiskError, SeverityLevel};

pub use config::{
    ClockConfig, ClockMode, RunConfig, DEFAULT_AGENT_KEY, DEFAULT_CLOCK_START, DEFAULT_CONTEXT_BYTE_BUDGET,
    DEFAULT_MAX_REPAIR_ATTEMPTS, DEFAULT_QUICK_FIX_THRESHOLD,
};
pub use diagnostics::{
    replay_script, DispatchFailureRecord, DispatchRecord, RejectionRecord, DIAGNOSTICS_DIR, DISPATCHES_FILE,
    DISPATCH_FAILURES_FILE, REJECTIONS_FILE,
};
pub use kernel::{artifact_content, augment_completion, builtin_results, KernelInputs};

use diagnostics::{Diagnostics, Failure};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const REASON_EXHAUSTED: &str = "protocol_violations_exhausted";
pub const REASON_DEPENDENCY: &str = "dependency_blocked";
pub const REASON_DISPATCH: &str = "dispatch_failed";

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run directory {0} is not empty")]
    RunDirNotEmpty(PathBuf),
    #[error("{0} is not an initialized run (no run_initialized event)")]
    NotInitialized(PathBuf),
    #[error("registry changed since init: expected digest {expected}, found {found}")]
    RegistryDigest { expected: String, found: String },
    #[error("{0}")]
    InvalidCommand(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestratorError + '_ {
    move |source| OrchestratorError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    VerifiedComplete,
    CompleteWithBlocked,
    Aborted,
}

impl OutcomeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeStatus::VerifiedComplete => "verified_complete",
            OutcomeStatus::CompleteWithBlocked => "complete_with_blocked",
            OutcomeStatus::Aborted => "aborted",
        }
    }
}

impl fmt::Display for OutcomeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub status: OutcomeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_hash: Option<String>,
    pub events: u64,
    pub rejections: u64,
    pub dispatch_failures: u64,
    pub blocked_tasks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Everything rebuilt from the `run_initialized` event.
pub struct RunContext {
    pub run_dir: PathBuf,
    pub config: RunConfig,
    pub config_dir: PathBuf,
    pub registry: Registry,
}

impl RunContext {
    pub fn log_path(&self) -> PathBuf {
        self.run_dir.join(EVENTS_FILE)
    }

    fn timestamp(&self, sequence: u64) -> Result<String, OrchestratorError> {
        self.config.timestamp(sequence)
    }
}

fn absolute(p: &Path) -> Result<PathBuf, OrchestratorError> {
    std::path::absolute(p).map_err(io_err(p))
}

/// Creates the run directory and appends `run_initialized`.
pub fn cmd_init(config_path: &Path, run_dir: &Path) -> Result<Event, OrchestratorError> {
    let config = RunConfig::load(config_path)?;
    let config_dir = absolute(config_path)?
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("/"));
    config.validate_shape()?;
    config.validate_paths(&config_dir)?;
    let registry = config.load_registry(&config_dir)?;

    if run_dir.exists() {
        let mut entries = std::fs::read_dir(run_dir).map_err(io_err(run_dir))?;
        if entries.next().is_some() {
            return Err(OrchestratorError::RunDirNotEmpty(run_dir.to_path_buf()));
        }
    }
    std::fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
    let mut log = EventLog::create(&run_dir.join(EVENTS_FILE))?;
    let config_value = serde_json::to_value(&config).expect("config serializes");
    let payload = json!({
        "config": config_value,
        "config_dir": config_dir.to_string_lossy(),
        "registry_digest": registry.digest(),
        "registry_version": registry.doc().version,
        "counts": {
            "phases": registry.phases().len() as u64,
            "domains": registry.domains().len() as u64,
            "checks": registry.checks().len() as u64,
            "tasks": registry.tasks().len() as u64,
        },
    });
    let body =
        ProposedEvent::new(ORCHESTRATOR_ACTOR, EventKind::RunInitialized, payload).into_body(config.timestamp(0)?);
    Ok(log.append(body)?)
}

/// Rebuilds the run context from the first event of a log.
pub fn load_context(run_dir: &Path, events: &[Event]) -> Result<RunContext, OrchestratorError> {
    let first = events
        .first()
        .filter(|e| e.kind == EventKind::RunInitialized)
        .ok_or_else(|| OrchestratorError::NotInitialized(run_dir.to_path_buf()))?;
    let config: RunConfig = serde_json::from_value(first.payload.get("config").cloned().unwrap_or(Value::Null))
        .map_err(|e| OrchestratorError::Config(format!("config snapshot in run_initialized: {e}")))?;
    let config_dir = PathBuf::from(
        first
            .payload_str("config_dir")
            .ok_or_else(|| OrchestratorError::Config("run_initialized lacks config_dir".into()))?,
    );
    let registry = config.load_registry(&config_dir)?;
    let expected = first.payload_str("registry_digest").unwrap_or_default();
    if registry.digest() != expected {
        return Err(OrchestratorError::RegistryDigest {
            expected: expected.to_string(),
            found: registry.digest().to_string(),
        });
    }
    Ok(RunContext {
        run_dir: run_dir.to_path_buf(),
        config,
        config_dir,
        registry,
    })
}

/// Options that change how agents are supplied without touching the log.
#[derive(Default)]
pub struct RunOptions {
    /// Agents to use instead of the configured binding of the same name.
    pub agent_overrides: BTreeMap<String, Box<dyn Agent>>,
}

impl RunOptions {
    /// Replaces every configured agent with a scripted replay of `source`'s recorded outputs.
    pub fn replay_from(source_run: &Path, config: &RunConfig) -> Result<Self, OrchestratorError> {
        let mut agent_overrides: BTreeMap<String, Box<dyn Agent>> = BTreeMap::new();
        for b in &config.agents {
            let script = replay_script(source_run, b.name())?;
            agent_overrides.insert(b.name().to_string(), Box::new(ScriptedAgent::new(b.name(), script)));
        }
        Ok(Self { agent_overrides })
    }
}

fn aborted(events: u64, reason: String, diag: Option<&Diagnostics>) -> RunOutcome {
    RunOutcome {
        status: OutcomeStatus::Aborted,
        state_hash: None,
        events,
        rejections: diag.map_or(0, |d| d.rejections.len() as u64),
        dispatch_failures: diag.map_or(0, |d| d.dispatch_failures.len() as u64),
        blocked_tasks: Vec::new(),
        reason: Some(reason),
    }
}

/// Sequence after which failures count against the current step of a task.
fn step_start(events: &[Event], task_id: &str) -> u64 {
    events
        .iter()
        .rev()
        .find(|e| e.payload_str("task_id") == Some(task_id))
        .map_or(0, |e| e.sequence + 1)
}

pub fn cmd_run(run_dir: &Path) -> Result<RunOutcome, OrchestratorError> {
    run_with(run_dir, RunOptions::default())
}

struct Loop<'a> {
    ctx: &'a RunContext,
    log: EventLog,
    diag: Diagnostics,
    agents: BTreeMap<String, Box<dyn Agent>>,
    repo: RepoSnapshot,
    docs: Option<RepoSnapshot>,
}

enum Step {
    Continue,
    Finished,
    Abort(String),
}

pub fn run_with(run_dir: &Path, mut options: RunOptions) -> Result<RunOutcome, OrchestratorError> {
    let log_path = run_dir.join(EVENTS_FILE);
    let bytes = std::fs::read(&log_path).map_err(io_err(&log_path))?;
    let chain = event_store::verify_bytes(&bytes);
    if !chain.valid {
        return Ok(aborted(
            chain.events_checked,
            format!(
                "event chain invalid at sequence {}",
                chain.first_bad_sequence.unwrap_or(0)
            ),
            None,
        ));
    }
    let (log, events) = EventLog::open(&log_path)?;
    let ctx = load_context(run_dir, &events)?;
    ctx.config.validate_shape()?;
    ctx.config.validate_paths(&ctx.config_dir)?;

    let diag = Diagnostics::open(run_dir)?;
    let mut agents: BTreeMap<String, Box<dyn Agent>> = BTreeMap::new();
    for binding in ctx.config.resolved_agents(&ctx.config_dir) {
        let name = binding.name().to_string();
        let agent = match options.agent_overrides.remove(&name) {
            Some(a) => a,
            None => agents::connect(&binding)?,
        };
        agents.insert(name, agent);
    }
    let repo_root = ctx.config.repo_root(&ctx.config_dir);
    let repo = RepoSnapshot::scan(&repo_root).map_err(io_err(&repo_root))?;
    let docs = match ctx.config.docs_dir(&ctx.config_dir) {
        Some(d) => Some(RepoSnapshot::scan(&d).map_err(io_err(&d))?),
        None => None,
    };
    let mut lp = Loop {
        ctx: &ctx,
        log,
        diag,
        agents,
        repo,
        docs,
    };
    lp.fast_forward_scripts();

    loop {
        match lp.step()? {
            Step::Continue => {}
            Step::Finished => break,
            Step::Abort(reason) => {
                return Ok(aborted(lp.log.len(), reason, Some(&lp.diag)));
            }
        }
    }
    lp.finish()
}

impl Loop<'_> {
    fn fast_forward_scripts(&mut self) {
        let registry = &self.ctx.registry;
        for (name, agent) in self.agents.iter_mut() {
            for t in registry.tasks() {
                let n = self.diag.served(name, &t.task_id);
                if n > 0 {
                    agent.resume(&t.task_id, n);
                }
            }
        }
    }

    fn read_state(&self) -> Result<Result<(Vec<Event>, AuditState), String>, OrchestratorError> {
        let path = self.ctx.log_path();
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        let chain = event_store::verify_bytes(&bytes);
        if !chain.valid {
            return Ok(Err(format!(
                "event chain invalid at sequence {}",
                chain.first_bad_sequence.unwrap_or(0)
            )));
        }
        let events = event_store::scan_bytes(&bytes).events;
        if events.len() as u64 != self.log.len() {
            return Ok(Err(format!(
                "log has {} events but the writer appended {}",
                events.len(),
                self.log.len()
            )));
        }
        match projection::project(&events, &self.ctx.registry) {
            Ok(state) => Ok(Ok((events, state))),
            Err(e) => Ok(Err(format!("projection failed: {e}"))),
        }
    }

    fn append(&mut self, proposed: Vec<ProposedEvent>) -> Result<(), OrchestratorError> {
        for p in proposed {
            let ts = self.ctx.timestamp(self.log.len())?;
            self.log.append(p.into_body(ts))?;
        }
        Ok(())
    }

    fn block(&mut self, task_id: &str, status: TaskStatus, reason: String) -> Result<(), OrchestratorError> {
        self.append(vec![ProposedEvent::new(
            ORCHESTRATOR_ACTOR,
            EventKind::TaskBlocked,
            json!({"task_id": task_id, "reason": reason, "prior_status": status, "origin": "orchestrator"}),
        )])
    }

    fn step(&mut self) -> Result<Step, OrchestratorError> {
        let (events, state) = match self.read_state()? {
            Ok(v) => v,
            Err(reason) => return Ok(Step::Abort(reason)),
        };
        if state.all_terminal() {
            return Ok(Step::Finished);
        }
        let registry = &self.ctx.registry;
        let phase = state.current_phase;
        if state.phase_terminal(phase) {
            if (phase as usize) < registry.phases().len() {
                self.append(vec![ProposedEvent::new(
                    ORCHESTRATOR_ACTOR,
                    EventKind::PhaseAdvanced,
                    json!({"from": phase, "to": phase + 1}),
                )])?;
                return Ok(Step::Continue);
            }
            return Ok(Step::Abort("final phase is terminal but tasks remain open".into()));
        }

        // Todo tasks behind a blocked dependency can never run.
        for t in registry.tasks().iter().filter(|t| t.phase == phase) {
            if state.status_of(&t.task_id) != Some(TaskStatus::Todo) {
                continue;
            }
            if let Some(dep) = t
                .depends_on
                .iter()
                .find(|d| state.status_of(d) == Some(TaskStatus::Blocked))
            {
                let reason = format!("{REASON_DEPENDENCY}: {dep}");
                let id = t.task_id.clone();
                self.block(&id, TaskStatus::Todo, reason)?;
                return Ok(Step::Continue);
            }
        }

        let task = registry
            .tasks()
            .iter()
            .find(|t| t.phase == phase && state.status_of(&t.task_id) == Some(TaskStatus::InProgress))
            .or_else(|| {
                eligible_tasks(&state, registry)
                    .first()
                    .and_then(|id| registry.task(id))
            });
        let Some(task) = task.cloned() else {
            return Ok(Step::Abort(format!("no eligible task in phase {phase}")));
        };
        self.dispatch(&task, &events, &state)
    }

    fn dispatch(&mut self, task: &TaskDef, events: &[Event], state: &AuditState) -> Result<Step, OrchestratorError> {
        let ctx = self.ctx;
        let registry = &ctx.registry;
        let status = state.status_of(&task.task_id).expect("registry task");
        let agent_name = ctx
            .config
            .agent_for(task.kind)
            .expect("validated config binds every kind")
            .to_string();

        let failures: Vec<Failure> = self
            .diag
            .failures_since(&task.task_id, step_start(events, &task.task_id));
        if failures.len() as u32 > ctx.config.max_repair_attempts {
            let reason = if failures.iter().all(|f| f.dispatch) {
                format!("{REASON_DISPATCH}: {}", failures.last().map_or("", |f| f.note.as_str()))
            } else {
                REASON_EXHAUSTED.to_string()
            };
            self.block(&task.task_id, status, reason)?;
            return Ok(Step::Continue);
        }

        let artifact_root = ctx.run_dir.clone();
        let sources = ContextSources {
            registry,
            repo: &self.repo,
            docs: self.docs.as_ref(),
            artifact_root: &artifact_root,
            byte_budget: ctx.config.context_byte_budget,
        };
        let mut pack = match build_context(&task.task_id, state, &agent_name, &sources) {
            Ok(p) => p,
            Err(e) => return Ok(Step::Abort(format!("context for {}: {e}", task.task_id))),
        };
        pack.repair_notes = failures.iter().map(|f| f.note.clone()).collect();

        let log_len = self.log.len();
        let agent = self.agents.get_mut(&agent_name).expect("validated agent name");
        let output = match agent.dispatch(&pack) {
            Ok(o) => o,
            Err(e) => {
                self.diag.record_dispatch_failure(DispatchFailureRecord {
                    log_len,
                    agent: agent_name,
                    task_id: task.task_id.clone(),
                    prior_status: status,
                    error: e.to_string(),
                })?;
                return Ok(Step::Continue);
            }
        };
        self.diag.record_dispatch(DispatchRecord {
            log_len,
            agent: agent_name.clone(),
            task_id: task.task_id.clone(),
            raw_text: output.raw_text.clone(),
            attempt: output.attempt,
            latency_ms: output.latency_ms,
        })?;

        let reject = |diag: &mut Diagnostics, r: Rejection| {
            diag.record_rejection(RejectionRecord {
                log_len,
                agent: agent_name.clone(),
                task_id: task.task_id.clone(),
                prior_status: status,
                code: r.code.as_str().to_string(),
                detail: r.detail,
                raw_text: output.raw_text.clone(),
            })
        };

        let mut intention = match protocol::parse_intention(&output.raw_text) {
            Ok(i) => i,
            Err(r) => {
                reject(&mut self.diag, r)?;
                return Ok(Step::Continue);
            }
        };
        if intention.action == Action::Complete && intention.task_id == task.task_id {
            let inputs = KernelInputs {
                registry,
                repo: &self.repo,
                docs: self.docs.as_ref(),
                quick_fix_threshold: ctx.config.quick_fix_threshold,
            };
            augment_completion(&mut intention, task, state, &inputs)?;
        }
        let proposed = match protocol::validate(&intention, state, registry) {
            Ok(p) => p,
            Err(r) => {
                reject(&mut self.diag, r)?;
                return Ok(Step::Continue);
            }
        };
        if intention.task_id != task.task_id {
            let r = Rejection::new(
                RejectionCode::InvalidTransition,
                format!(
                    "{} was dispatched; intentions for {} are not accepted now",
                    task.task_id, intention.task_id
                ),
            );
            reject(&mut self.diag, r)?;
            return Ok(Step::Continue);
        }
        if intention.actor != agent_name {
            let r = Rejection::new(
                RejectionCode::LockViolation,
                format!(
                    "dispatched agent is {agent_name}, intention claims actor {}",
                    intention.actor
                ),
            );
            reject(&mut self.diag, r)?;
            return Ok(Step::Continue);
        }

        let mut writes: Vec<_> = intention.file_updates.iter().collect();
        writes.sort_by(|a, b| a.path.cmp(&b.path));
        for u in writes {
            let path = ctx.run_dir.join(&u.path);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            std::fs::write(&path, u.content.as_bytes()).map_err(io_err(&path))?;
        }
        self.append(proposed)?;
        Ok(Step::Continue)
    }

    fn finish(mut self) -> Result<RunOutcome, OrchestratorError> {
        let (events, state) = match self.read_state()? {
            Ok(v) => v,
            Err(reason) => return Ok(aborted(self.log.len(), reason, Some(&self.diag))),
        };
        if let Err(reason) = check_artifact_chain(&self.ctx.run_dir, &state, &self.ctx.registry) {
            return Ok(aborted(self.log.len(), reason, Some(&self.diag)));
        }
        if let Some(r) = self
            .diag
            .rejections
            .iter()
            .find(|r| !state.status_of(&r.task_id).is_some_and(TaskStatus::is_terminal))
        {
            return Ok(aborted(
                self.log.len(),
                format!("rejection for {} was neither repaired nor blocked", r.task_id),
                Some(&self.diag),
            ));
        }
        let blocked: Vec<String> = state.blocked_tasks().map(|t| t.task_id.clone()).collect();
        let status = if blocked.is_empty() {
            OutcomeStatus::VerifiedComplete
        } else {
            OutcomeStatus::CompleteWithBlocked
        };

        let already = events
            .iter()
            .rev()
            .find(|e| e.kind == EventKind::VerificationRecorded)
            .is_some_and(|e| e.payload_str("state_hash") == Some(state.state_hash.as_str()));
        if !already {
            let verified = self.log.len();
            self.append(vec![ProposedEvent::new(
                ORCHESTRATOR_ACTOR,
                EventKind::VerificationRecorded,
                json!({"state_hash": state.state_hash, "events_verified": verified, "outcome": status.as_str()}),
            )])?;
        }
        let check = projection::replay_verify(&self.ctx.log_path(), &self.ctx.registry)?;
        if !check.ok() {
            return Ok(aborted(
                self.log.len(),
                "replay verification of the finished run failed".into(),
                Some(&self.diag),
            ));
        }
        write_reports(self.ctx)?;
        Ok(RunOutcome {
            status,
            state_hash: Some(state.state_hash),
            events: self.log.len(),
            rejections: self.diag.rejections.len() as u64,
            dispatch_failures: self.diag.dispatch_failures.len() as u64,
            blocked_tasks: blocked,
            reason: None,
        })
    }
}

/// Every done task has its kernel artifact indexed, and every indexed
/// artifact is on disk with the recorded digest.
pub fn check_artifact_chain(run_dir: &Path, state: &AuditState, registry: &Registry) -> Result<(), String> {
    for t in registry.tasks() {
        if state.status_of(&t.task_id) == Some(TaskStatus::Done) {
            let path = t.kernel_artifact();
            match state.artifacts.get(&path) {
                Some(a) if a.written_by_task == t.task_id => {}
                _ => return Err(format!("done task {} has no indexed artifact {path}", t.task_id)),
            }
        }
    }
    for (path, a) in &state.artifacts {
        let bytes = std::fs::read(run_dir.join(path)).map_err(|e| format!("artifact {path}: {e}"))?;
        if sha256_hex(&bytes) != a.sha256 {
            return Err(format!("artifact {path} does not match its recorded digest"));
        }
    }
    Ok(())
}

/// Renders `reports/final/report.{md,json}` from the verified log.
pub fn write_reports(ctx: &RunContext) -> Result<report::ReportBundle, OrchestratorError> {
    let events = event_store::read_all(&ctx.log_path())?;
    let chain = event_store::verify_chain(&events);
    if !chain.valid {
        return Err(StoreError::ChainInvalid(chain.first_bad_sequence.unwrap_or(0)).into());
    }
    let state = projection::project(&events, &ctx.registry)?;
    let verification = events.iter().rev().find(|e| e.kind == EventKind::VerificationRecorded);
    let meta = RunMeta {
        registry_digest: ctx.registry.digest().to_string(),
        generated_at: verification
            .or(events.last())
            .map(|e| e.timestamp.clone())
            .unwrap_or_default(),
        outcome: verification
            .and_then(|e| e.payload_str("outcome"))
            .unwrap_or("in_progress")
            .to_string(),
        events_verified: chain.events_checked,
    };
    let assessment = report::assess_state(&state, &ctx.registry, ctx.config.quick_fix_threshold)?;
    let bundle = report::render_bundle(&state, &ctx.registry, &assessment, &meta)?;
    for (rel, content) in [(FINAL_REPORT_MD, &bundle.markdown), (FINAL_REPORT_JSON, &bundle.json)] {
        let path = ctx.run_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        std::fs::write(&path, content.as_bytes()).map_err(io_err(&path))?;
    }
    Ok(bundle)
}

fn open_run(run_dir: &Path) -> Result<(Vec<Event>, RunContext), OrchestratorError> {
    let events = event_store::read_all(&run_dir.join(EVENTS_FILE))?;
    let ctx = load_context(run_dir, &events)?;
    Ok((events, ctx))
}

/// Replays the log from scratch against the run's registry.
pub fn cmd_verify(run_dir: &Path) -> Result<VerificationResult, OrchestratorError> {
    let path = run_dir.join(EVENTS_FILE);
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    let chain = event_store::verify_bytes(&bytes);
    if !chain.valid {
        return Ok(VerificationResult {
            chain,
            state_hash: None,
            matches_recorded: RecordedMatch::NotApplicable,
            projection_error: None,
        });
    }
    let events = event_store::scan_bytes(&bytes).events;
    let registry = match load_context(run_dir, &events) {
        Ok(ctx) => ctx.registry,
        Err(e) => {
            return Ok(VerificationResult {
                chain,
                state_hash: None,
                matches_recorded: RecordedMatch::NotApplicable,
                projection_error: Some(e.to_string()),
            })
        }
    };
    Ok(projection::replay_verify_bytes(&bytes, &registry))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusSummary {
    pub current_phase: u8,
    pub tasks: BTreeMap<String, u64>,
    pub findings_by_severity: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_sequence: Option<u64>,
    pub events: u64,
    pub state_hash: String,
    pub chain_valid: bool,
}

impl StatusSummary {
    pub fn to_canonical_json(&self) -> String {
        canonical::to_canonical_string(self).expect("status is canonically encodable")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("phase: {}\n", self.current_phase));
        for s in TaskStatus::ALL {
            out.push_str(&format!(
                "{}: {}\n",
                s,
                self.tasks.get(s.as_str()).copied().unwrap_or(0)
            ));
        }
        for l in SeverityLevel::ALL_DESC {
            out.push_str(&format!(
                "findings {}: {}\n",
                l,
                self.findings_by_severity.get(l.as_str()).copied().unwrap_or(0)
            ));
        }
        match self.last_sequence {
            Some(s) => out.push_str(&format!("last sequence: {s}\n")),
            None => out.push_str("last sequence: none\n"),
        }
        out.push_str(&format!("events: {}\n", self.events));
        out.push_str(&format!("state hash: {}\n", self.state_hash));
        out.push_str(&format!("chain valid: {}\n", self.chain_valid));
        out
    }
}

pub fn cmd_status(run_dir: &Path) -> Result<StatusSummary, OrchestratorError> {
    let (events, ctx) = open_run(run_dir)?;
    let chain = event_store::verify_chain(&events);
    let state = projection::project(&events, &ctx.registry)?;
    let tasks = TaskStatus::ALL
        .iter()
        .map(|s| (s.as_str().to_string(), state.count_status(*s) as u64))
        .collect();
    let findings_by_severity = SeverityLevel::ALL_DESC
        .iter()
        .map(|l| {
            let n = state
                .findings
                .iter()
                .filter(|f| f.finding.severity.map(|s| s.level) == Some(*l))
                .count() as u64;
            (l.as_str().to_string(), n)
        })
        .collect();
    Ok(StatusSummary {
        current_phase: state.current_phase,
        tasks,
        findings_by_severity,
        last_sequence: state.last_sequence,
        events: events.len() as u64,
        state_hash: state.state_hash,
        chain_valid: chain.valid,
    })
}

/// Re-renders the final reports from the log alone.
pub fn cmd_report(run_dir: &Path) -> Result<report::ReportBundle, OrchestratorError> {
    let (_, ctx) = open_run(run_dir)?;
    write_reports(&ctx)
}

/// Operator command: returns a blocked task of the current phase to todo.
pub fn cmd_unblock(run_dir: &Path, task_id: &str, reason: &str) -> Result<Event, OrchestratorError> {
    if reason.trim().is_empty() {
        return Err(OrchestratorError::InvalidCommand(
            "an unblock reason is required".into(),
        ));
    }
    let (mut log, events) = EventLog::open(&run_dir.join(EVENTS_FILE))?;
    let ctx = load_context(run_dir, &events)?;
    let state = projection::project(&events, &ctx.registry)?;
    let view = state
        .task(task_id)
        .ok_or_else(|| OrchestratorError::InvalidCommand(format!("unknown task {task_id}")))?;
    if view.status != TaskStatus::Blocked {
        return Err(OrchestratorError::InvalidCommand(format!(
            "{task_id} is {}, not blocked",
            view.status
        )));
    }
    if view.phase != state.current_phase {
        return Err(OrchestratorError::InvalidCommand(format!(
            "{task_id} belongs to phase {} but the run is in phase {}",
            view.phase, state.current_phase
        )));
    }
    let body = ProposedEvent::new(
        OPERATOR_ACTOR,
        EventKind::TaskUnblocked,
        json!({"task_id": task_id, "reason": reason, "prior_status": TaskStatus::Blocked}),
    )
    .into_body(ctx.timestamp(log.len())?);
    Ok(log.append(body)?)
}
