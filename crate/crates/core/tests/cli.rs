//! The `auditk` binary: commands, output and exit codes.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use audit_kernel::agents::scripts;
use audit_kernel::playbook::Registry;
use serde_json::Value;

fn auditk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_auditk"))
        .args(args)
        .env_remove("AUDIT_MODEL_API_KEY")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn full_cycle_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write_config(
        &dir.path().join("setup"),
        &scripts::happy_path_script(&Registry::shipped(), common::AGENT),
    );
    let run = dir.path().join("run");

    let o = auditk(&["init", "--config", p(&config), p(&run)]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let o = auditk(&["init", "--config", p(&config), p(&run)]);
    assert_eq!(o.status.code(), Some(1), "second init must refuse");

    let o = auditk(&["verify", p(&run)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("matches recorded: not_applicable"));

    let o = auditk(&["status", p(&run)]);
    assert!(stdout(&o).contains("phase: 1\n"));
    assert!(stdout(&o).contains("todo: 26\n"));

    let o = auditk(&["run", p(&run)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("outcome: verified_complete"));

    let o = auditk(&["verify", p(&run)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("matches recorded: matches"));

    let o = auditk(&["status", "--json", p(&run)]);
    let text = stdout(&o);
    let v: Value = serde_json::from_str(text.trim_end()).unwrap();
    assert_eq!(v["tasks"]["done"], 26);
    assert_eq!(
        audit_kernel::canonical::to_canonical_string(&v).unwrap(),
        text.trim_end()
    );

    let o = auditk(&["report", p(&run)]);
    assert_eq!(o.status.code(), Some(0));

    let o = auditk(&["unblock", p(&run), "T4", "--reason", "nothing to unblock"]);
    assert_eq!(o.status.code(), Some(1));

    // Flip one byte inside the payload of event 7.
    let log = run.join("events.jsonl");
    let mut bytes = std::fs::read(&log).unwrap();
    let spans = common::line_spans(&bytes);
    let (start, end) = spans[7];
    let line = std::str::from_utf8(&bytes[start..end]).unwrap();
    let pos = start + line.find("\"payload\"").unwrap() + 12;
    bytes[pos] ^= 0x01;
    std::fs::write(&log, &bytes).unwrap();
    let o = auditk(&["verify", p(&run)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("first bad sequence: 7"), "{}", stdout(&o));

    let o = auditk(&["run", p(&run)]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(std::fs::read(&log).unwrap(), bytes, "aborted run must not append");
}

#[test]
fn usage_errors() {
    assert_eq!(auditk(&[]).status.code(), Some(1));
    assert_eq!(auditk(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(auditk(&["init", "somewhere"]).status.code(), Some(1));
    assert_eq!(auditk(&["unblock", "run", "T1"]).status.code(), Some(1));
    assert_eq!(auditk(&["--help"]).status.code(), Some(0));
}

#[test]
fn commands_on_a_missing_run_fail() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(auditk(&["verify", p(&missing)]).status.code(), Some(2));
    assert_eq!(auditk(&["run", p(&missing)]).status.code(), Some(3));
    assert_eq!(auditk(&["status", p(&missing)]).status.code(), Some(1));
}

#[test]
fn replay_from_an_earlier_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write_config(
        &dir.path().join("setup"),
        &scripts::adversarial_script(&Registry::shipped(), common::AGENT),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for run in [&a, &b] {
        assert_eq!(auditk(&["init", "--config", p(&config), p(run)]).status.code(), Some(0));
    }
    assert_eq!(auditk(&["run", p(&a)]).status.code(), Some(0));
    // Empty the script; the replay only needs the recorded outputs.
    std::fs::write(dir.path().join("setup/script.json"), "[]").unwrap();
    let o = auditk(&["run", "--replay-from", p(&a), p(&b)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("rejections: 6"));
    assert_eq!(
        std::fs::read(a.join("events.jsonl")).unwrap(),
        std::fs::read(b.join("events.jsonl")).unwrap()
    );
}
