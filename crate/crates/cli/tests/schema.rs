use std::path::Path;

use serde_json::Value;

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn example(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bundled_configs_validate_and_parse() {
    let v = schema();
    for name in ["simplex3.json", "sharpness.json", "polar_ball.json", "box3.json"] {
        let doc = example(name);
        let errors: Vec<String> = v.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
        robustpath_cli::config::parse_config(&doc.to_string()).unwrap().instance().unwrap();
    }
}

type Mutation = (&'static str, fn(&mut Value));

#[test]
fn schema_and_parser_reject_the_same_mistakes() {
    let v = schema();
    let base = example("simplex3.json");
    let mutations: [Mutation; 5] = [
        ("unknown top-level key", |d| {
            d["colour"] = 2.into();
        }),
        ("unknown region kind", |d| d["region"]["kind"] = "polytope".into()),
        ("missing shape", |d| {
            d.as_object_mut().unwrap().remove("shape");
        }),
        ("bad bound sentinel", |d| d["region"]["ub"][0] = "infinity".into()),
        ("unknown stop key", |d| d["stop"] = serde_json::json!({"tolerance": 1e-8, "patience": 3})),
    ];
    for (what, mutate) in mutations {
        let mut doc = base.clone();
        mutate(&mut doc);
        assert!(!v.is_valid(&doc), "schema accepted: {what}");
        assert!(robustpath_cli::config::parse_config(&doc.to_string()).is_err(), "parser accepted: {what}");
    }
}
