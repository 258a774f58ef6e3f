use audit_kernel::playbook::{Registry, RegistryError, DEFAULT_REGISTRY_JSON};
use serde_json::Value;

fn doc() -> Value {
    serde_json::from_str(DEFAULT_REGISTRY_JSON).unwrap()
}

fn load(v: &Value) -> Result<Registry, RegistryError> {
    Registry::from_json(&v.to_string())
}

/// Appends a copy of the last element with a fresh id.
fn grow(v: &mut Value, key: &str, id_field: &str) {
    let list = v[key].as_array_mut().unwrap();
    let mut extra = list.last().unwrap().clone();
    if let Some(id) = extra.get_mut(id_field) {
        let fresh = match &*id {
            Value::String(s) => Value::String(format!("{s}-extra")),
            Value::Number(n) => Value::from(n.as_u64().unwrap() + 1),
            other => other.clone(),
        };
        *id = fresh;
    }
    list.push(extra);
}

#[test]
fn shipped_registry_has_the_expected_shape() {
    let r = Registry::shipped();
    assert_eq!(r.phases().len(), 4);
    assert_eq!(r.tasks().len(), 26);
    assert_eq!(r.domains().len(), 16);
    assert_eq!(r.checks().len(), 95);
    for d in r.domains() {
        assert!(r.domain_checks(&d.id).count() > 0, "{}", d.id);
        assert!(r.domain_task(&d.id).is_some(), "{}", d.id);
    }
}

#[test]
fn every_count_off_by_one_is_rejected() {
    for (key, id_field, what, expected) in [
        ("phases", "phase", "phases", 4),
        ("domains", "id", "domains", 16),
        ("checks", "check_id", "checks", 95),
        ("tasks", "task_id", "tasks", 26),
    ] {
        let mut fewer = doc();
        fewer[key].as_array_mut().unwrap().pop();
        match load(&fewer) {
            Err(RegistryError::Count {
                what: w,
                expected: e,
                found,
            }) => {
                assert_eq!((w, e, found), (what, expected, expected - 1));
            }
            other => panic!("{key} -1: {other:?}"),
        }

        let mut more = doc();
        grow(&mut more, key, id_field);
        match load(&more) {
            Err(RegistryError::Count {
                what: w,
                expected: e,
                found,
            }) => {
                assert_eq!((w, e, found), (what, expected, expected + 1));
            }
            other => panic!("{key} +1: {other:?}"),
        }
    }
}

#[test]
fn structural_errors() {
    let mut dup = doc();
    let first = dup["checks"][0]["check_id"].clone();
    dup["checks"][1]["check_id"] = first;
    assert!(matches!(
        load(&dup),
        Err(RegistryError::Duplicate { what: "check", .. })
    ));

    let mut dangling = doc();
    dangling["tasks"][3]["depends_on"] = serde_json::json!(["T99"]);
    assert!(matches!(load(&dangling), Err(RegistryError::UnknownDependency { .. })));

    let mut backwards = doc();
    backwards["tasks"][0]["depends_on"] = serde_json::json!(["T4"]);
    assert!(load(&backwards).is_err());

    let mut bad_regex = doc();
    let idx = bad_regex["checks"]
        .as_array()
        .unwrap()
        .iter()
        .position(|c| c["builtin_rule"]["type"] == "pattern")
        .unwrap();
    bad_regex["checks"][idx]["builtin_rule"]["pattern"] = Value::from("(unclosed");
    assert!(matches!(load(&bad_regex), Err(RegistryError::InvalidCheck { .. })));

    assert!(matches!(Registry::from_json("{"), Err(RegistryError::Parse(_))));
}

#[test]
fn digest_ignores_formatting() {
    let pretty = serde_json::to_string_pretty(&doc()).unwrap();
    assert_eq!(
        Registry::from_json(&pretty).unwrap().digest(),
        Registry::shipped().digest()
    );
}
