mod common;

use std::collections::BTreeMap;

use audit_kernel::playbook::Registry;
use audit_kernel::projection::TaskStatus;
use audit_kernel::protocol::{parse_intention, RejectionCode};

#[test]
fn every_cell_matches_the_rule_list() {
    let r = Registry::shipped();
    let outcomes = common::run_grid(&r);
    assert_eq!(outcomes.len(), 144);
    let mut accepted = 0;
    for o in &outcomes {
        assert_eq!(o.actual, o.expected, "{:?}", o.cell);
        assert!(o.hash_unchanged, "{:?}", o.cell);
        if o.actual.is_none() {
            accepted += 1;
        }
    }
    assert_eq!(accepted, 3);
}

#[test]
fn rejection_codes_are_spread_across_the_grid() {
    let r = Registry::shipped();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for o in common::run_grid(&r) {
        *counts
            .entry(o.actual.map_or("accepted", RejectionCode::as_str))
            .or_default() += 1;
    }
    // 36 done cells; 81 stale restatements among the rest; the remaining 27
    // split between the table, ownership and acceptance.
    assert_eq!(counts["done_reopen"], 36);
    assert_eq!(counts["status_mismatch"], 81);
    assert_eq!(counts["invalid_transition"], 18);
    assert_eq!(counts["lock_violation"], 6);
    assert_eq!(counts["accepted"], 3);
}

#[test]
fn grid_intentions_survive_the_wire() {
    let r = Registry::shipped();
    for cell in common::all_cells() {
        let i = common::grid_intention(&r, cell);
        assert_eq!(parse_intention(&i.to_wire()).unwrap(), i);
    }
}

#[test]
fn compound_and_unknown_inputs() {
    let claim = r#"{"action":"claim","task_id":"T1","actor":"A","prior_status":"todo"}"#;
    assert_eq!(
        parse_intention(&format!("[{claim},{claim}]")).unwrap_err().code,
        RejectionCode::CompoundAction
    );
    let two_actions = r#"{"action":["claim","complete"],"task_id":"T1","actor":"A","prior_status":"todo"}"#;
    assert_eq!(
        parse_intention(two_actions).unwrap_err().code,
        RejectionCode::CompoundAction
    );
    let r = Registry::shipped();
    let state = audit_kernel::projection::AuditState::initial(&r);
    let ghost = audit_kernel::protocol::Intention::claim("T99", "A");
    assert_eq!(
        audit_kernel::protocol::validate(&ghost, &state, &r).unwrap_err().code,
        RejectionCode::UnknownTask
    );
    assert_eq!(state.status_of("T1"), Some(TaskStatus::Todo));
}
