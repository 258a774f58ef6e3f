//! Outputs compared against values produced by the Python scripts in
//! `tests/oracles/`.

mod common;

use audit_kernel::event_store::{self, seal, EventBody, EventKind};
use audit_kernel::playbook::Registry;
use audit_kernel::risk::{self, RecordedFinding};
use serde_json::{json, Value};

fn golden_json(name: &str) -> Value {
    let path = common::goldens_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

fn sample_body() -> EventBody {
    // Keys deliberately out of order.
    let payload = json!({
        "zeta": [3, 1, 2],
        "quote": "line\n\"tab\"\t\\",
        "alpha": {"c": -7, "b": true, "a": "café ✓"},
    });
    EventBody::new(
        "2026-01-01T00:00:00Z",
        "orchestrator",
        EventKind::RunInitialized,
        payload.as_object().unwrap().clone(),
    )
}

#[test]
fn canonical_bytes_match_oracle() {
    let event = seal(sample_body(), 0, &"0".repeat(64)).unwrap();
    let bytes = event_store::canonical_bytes(&event.unsealed()).unwrap();
    let expected = std::fs::read(common::goldens_dir().join("sample_event.canonical")).unwrap();
    assert_eq!(String::from_utf8(bytes).unwrap(), String::from_utf8(expected).unwrap());
}

#[test]
fn chain_hashes_match_oracle() {
    let chain = golden_json("sample_chain.json");
    let genesis = seal(sample_body(), 0, &"0".repeat(64)).unwrap();
    assert_eq!(genesis.hash, chain["genesis_hash"].as_str().unwrap());
    let second_body = EventBody::new(
        "2026-01-01T00:00:01Z",
        "auditor",
        EventKind::TaskClaimed,
        json!({"task_id": "T1", "prior_status": "todo"})
            .as_object()
            .unwrap()
            .clone(),
    );
    let second = seal(second_body, 1, &genesis.hash).unwrap();
    assert_eq!(second.prev_hash, genesis.hash);
    assert_eq!(second.hash, chain["second_hash"].as_str().unwrap());
}

#[test]
fn registry_digest_and_counts_match_oracle() {
    let g = golden_json("registry.json");
    let r = Registry::shipped();
    assert_eq!(r.digest(), g["digest"].as_str().unwrap());
    assert_eq!(r.phases().len() as u64, g["phases"].as_u64().unwrap());
    assert_eq!(r.domains().len() as u64, g["domains"].as_u64().unwrap());
    assert_eq!(r.checks().len() as u64, g["checks"].as_u64().unwrap());
    assert_eq!(r.tasks().len() as u64, g["tasks"].as_u64().unwrap());
}

fn assert_risk_matches(findings_golden: &str, expected_golden: &str) {
    let r = Registry::shipped();
    let findings: Vec<RecordedFinding> = serde_json::from_value(golden_json(findings_golden)).unwrap();
    let expected = golden_json(expected_golden);
    let a = risk::assess(&findings, &r, 3, None).unwrap();
    assert_eq!(
        serde_json::to_value(&a.inventory).unwrap(),
        expected["inventory"],
        "inventory"
    );
    assert_eq!(
        serde_json::to_value(&a.classified).unwrap(),
        expected["classified"],
        "classified"
    );
    assert_eq!(serde_json::to_value(&a.matrix).unwrap(), expected["matrix"], "matrix");
    assert_eq!(serde_json::to_value(&a.score).unwrap(), expected["score"], "score");
}

#[test]
fn fixture_risk_cascade_matches_oracle() {
    assert_risk_matches("fixture_findings.json", "risk_fixture.json");
}

#[test]
fn synthetic_risk_cascade_matches_oracle() {
    assert_risk_matches("synthetic_findings.json", "risk_synthetic.json");
}
