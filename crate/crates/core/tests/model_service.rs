//! The model-service client against a local stub server.

mod common;

use std::net::TcpListener;
use std::time::{Duration, Instant};

use audit_kernel::agents::{render_prompt, scripts, Agent, DispatchError, ModelServiceAgent, API_KEY_ENV};
use audit_kernel::orchestrator::{self, OutcomeStatus, REASON_DEPENDENCY, REASON_DISPATCH};
use audit_kernel::playbook::{build_context, ContextPack, ContextSources, Registry, RepoSnapshot};
use audit_kernel::projection::{self, AuditState, TaskStatus};
use audit_kernel::protocol::Intention;
use serde_json::{json, Value};

use common::stub::{ok_text, start, Reply, Request};

fn t1_pack() -> ContextPack {
    let r = Registry::shipped();
    let repo = RepoSnapshot::scan(&common::fixture_repo()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let sources = ContextSources {
        registry: &r,
        repo: &repo,
        docs: None,
        artifact_root: dir.path(),
        byte_budget: 65536,
    };
    build_context("T1", &AuditState::initial(&r), "svc", &sources).unwrap()
}

#[test]
fn request_shape_and_response() {
    let claim = Intention::claim("T1", "svc").to_wire();
    let reply = claim.clone();
    let stub = start(Box::new(move |_, _| ok_text(&reply)));
    // Only this test sets the variable; no other test in this binary reads it.
    unsafe { std::env::set_var(API_KEY_ENV, "test-token") };
    let pack = t1_pack();
    let mut agent = ModelServiceAgent::new("svc", &stub.url, "audit-model", 5, 0);
    let out = agent.dispatch(&pack).unwrap();
    unsafe { std::env::remove_var(API_KEY_ENV) };
    assert_eq!(out.raw_text, claim);
    assert_eq!(out.attempt, 1);

    let seen = stub.seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    let req = &seen[0];
    assert_eq!(req.method, "POST");
    assert_eq!(req.path, "/v1/generate");
    assert_eq!(req.header("content-type"), Some("application/json"));
    assert_eq!(req.header("authorization"), Some("Bearer test-token"));
    let body: Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(body, json!({"model": "audit-model", "prompt": render_prompt(&pack)}));
    assert_eq!(audit_kernel::canonical::to_canonical_string(&body).unwrap(), req.body);
}

#[test]
fn retries_until_success() {
    let stub = start(Box::new(|i, _| {
        if i < 2 {
            Some((503, "{}".into()))
        } else {
            ok_text("hello")
        }
    }));
    let mut agent = ModelServiceAgent::new("svc", &stub.url, "m", 5, 2);
    let out = agent.dispatch(&t1_pack()).unwrap();
    assert_eq!(out.attempt, 3);
    assert_eq!(out.raw_text, "hello");
    assert_eq!(stub.seen.lock().unwrap().len(), 3);
}

#[test]
fn gives_up_after_the_retry_budget() {
    let stub = start(Box::new(|_, _| Some((500, "{}".into()))));
    let mut agent = ModelServiceAgent::new("svc", &stub.url, "m", 5, 1);
    match agent.dispatch(&t1_pack()) {
        Err(DispatchError::Service { attempts, last_error }) => {
            assert_eq!(attempts, 2);
            assert!(last_error.contains("500"), "{last_error}");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(stub.seen.lock().unwrap().len(), 2);
}

#[test]
fn malformed_bodies_count_as_failures() {
    let stub = start(Box::new(|i, _| match i {
        0 => Some((200, "not json".into())),
        1 => Some((200, json!({"content": "x"}).to_string())),
        _ => ok_text("third time"),
    }));
    let mut agent = ModelServiceAgent::new("svc", &stub.url, "m", 5, 2);
    let out = agent.dispatch(&t1_pack()).unwrap();
    assert_eq!(out.attempt, 3);
}

#[test]
fn stalled_service_times_out_per_attempt() {
    let stub = start(Box::new(|_, _| None));
    let mut agent = ModelServiceAgent::new("svc", &stub.url, "m", 5, 1).with_timeout(Duration::from_millis(200));
    let started = Instant::now();
    let err = agent.dispatch(&t1_pack()).unwrap_err();
    let elapsed = started.elapsed();
    assert!(matches!(err, DispatchError::Service { attempts: 2, .. }), "{err:?}");
    assert!(elapsed >= Duration::from_millis(400), "{elapsed:?}");
    assert!(elapsed < Duration::from_secs(2), "{elapsed:?}");
}

#[test]
fn unreachable_endpoint_fails_cleanly() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut agent = ModelServiceAgent::new("svc", &format!("http://127.0.0.1:{port}/x"), "m", 1, 0);
    assert!(matches!(
        agent.dispatch(&t1_pack()),
        Err(DispatchError::Service { attempts: 1, .. })
    ));
}

fn service_config(dir: &std::path::Path, url: &str, max_retries: u32) -> std::path::PathBuf {
    common::write_config_with(
        dir,
        &[],
        json!({
            "agents": [{"kind": "model_service", "name": "svc", "endpoint": url, "model": "m", "timeout_secs": 5, "max_retries": max_retries}],
            "agent_for_kind": {"default": "svc"},
        }),
    )
}

/// Answers like a compliant agent by reading the task and status from the prompt.
fn compliant(_: usize, req: &Request) -> Option<Reply> {
    let r = Registry::shipped();
    let body: Value = serde_json::from_str(&req.body).unwrap();
    let prompt = body["prompt"].as_str().unwrap();
    let task_id = prompt.strip_prefix("# Task ").unwrap().split(':').next().unwrap();
    let intention = if prompt.contains("\nprior_status: todo\n") {
        Intention::claim(task_id, "svc")
    } else {
        scripts::completion(&r, r.task(task_id).unwrap(), "svc")
    };
    ok_text(&intention.to_wire())
}

#[test]
fn full_run_through_the_service() {
    let flaky = |i: usize, req: &Request| {
        if i.is_multiple_of(3) {
            Some((502, "{}".into()))
        } else {
            compliant(i, req)
        }
    };
    let stub = start(Box::new(flaky));
    let dir = tempfile::tempdir().unwrap();
    let config = service_config(&dir.path().join("setup"), &stub.url, 2);
    let run = dir.path().join("run");
    orchestrator::cmd_init(&config, &run).unwrap();
    let outcome = orchestrator::cmd_run(&run).unwrap();
    assert_eq!(outcome.status, OutcomeStatus::VerifiedComplete, "{outcome:?}");
    assert_eq!(outcome.dispatch_failures, 0);
    assert!(orchestrator::cmd_verify(&run).unwrap().ok());
}

#[test]
fn dead_service_blocks_tasks_and_the_run_finishes() {
    let stub = start(Box::new(|_, _| Some((500, "{}".into()))));
    let dir = tempfile::tempdir().unwrap();
    let config = service_config(&dir.path().join("setup"), &stub.url, 0);
    let run = dir.path().join("run");
    orchestrator::cmd_init(&config, &run).unwrap();
    let outcome = orchestrator::cmd_run(&run).unwrap();
    assert_eq!(outcome.status, OutcomeStatus::CompleteWithBlocked, "{outcome:?}");
    let r = Registry::shipped();
    let events = audit_kernel::event_store::read_all(&run.join(orchestrator::EVENTS_FILE)).unwrap();
    let state = projection::project(&events, &r).unwrap();
    assert_eq!(state.count_status(TaskStatus::Blocked), 26);
    let t1 = state.task("T1").unwrap();
    assert!(t1.block_reason.as_deref().unwrap().starts_with(REASON_DISPATCH));
    assert!(state
        .task("T4")
        .unwrap()
        .block_reason
        .as_deref()
        .unwrap()
        .starts_with(REASON_DEPENDENCY));
    assert!(orchestrator::cmd_verify(&run).unwrap().ok());
}
