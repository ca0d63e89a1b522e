use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ppos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppos"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: [&str; 6] = ["--epochs", "3", "--steps-per-epoch", "200", "--hidden", "8"];

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

fn load_schema(name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(schema_dir().join(name)).unwrap()).unwrap()
}

/// Checks the subset of JSON Schema used by the shipped schemas:
/// `type`, `enum`, `required`, `properties`, `additionalProperties: false`,
/// `items`, `minimum`, `maximum` and file-relative `$ref`.
fn validate(schema: &Value, doc: &Value, path: &str) -> Result<(), String> {
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        return validate(&load_schema(r), doc, path);
    }
    if let Some(t) = schema.get("type") {
        let allowed: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => return Err(format!("{path}: bad type in schema")),
        };
        let ok = allowed.iter().any(|t| match *t {
            "object" => doc.is_object(),
            "array" => doc.is_array(),
            "string" => doc.is_string(),
            "boolean" => doc.is_boolean(),
            "null" => doc.is_null(),
            "integer" => doc.is_u64() || doc.is_i64(),
            "number" => doc.is_number(),
            _ => false,
        });
        if !ok {
            return Err(format!("{path}: expected {allowed:?}, found {doc}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(doc) {
            return Err(format!("{path}: {doc} not in {options:?}"));
        }
    }
    if let (Some(min), Some(x)) = (schema.get("minimum").and_then(Value::as_f64), doc.as_f64()) {
        if x < min {
            return Err(format!("{path}: {x} < {min}"));
        }
    }
    if let (Some(max), Some(x)) = (schema.get("maximum").and_then(Value::as_f64), doc.as_f64()) {
        if x > max {
            return Err(format!("{path}: {x} > {max}"));
        }
    }
    if let Some(obj) = doc.as_object() {
        let props = schema.get("properties").and_then(Value::as_object);
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            let key = key.as_str().unwrap();
            if !obj.contains_key(key) {
                return Err(format!("{path}: missing {key}"));
            }
        }
        for (k, v) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => validate(sub, v, &format!("{path}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{path}: unexpected field {k}"))
                }
                None => {}
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), doc.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            validate(items, v, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn assert_valid(schema: &str, file: &Path) {
    let doc: Value = serde_json::from_str(&fs::read_to_string(file).unwrap()).unwrap();
    if let Err(e) = validate(&load_schema(schema), &doc, "$") {
        panic!("{} does not match {schema}: {e}", file.display());
    }
}

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn train_writes_curve_summary_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec![
        "train", "--env", "reacher2d", "--variant", "ppos", "--alpha", "0.3", "--epsilon", "0.2", "--seed", "1", "--out", out,
    ];
    args.extend(SMALL);
    let o = ppos(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cell = dir.path().join("reacher2d-ppos-a0.3-e0.2-s1");
    let csv = fs::read_to_string(cell.join("curve.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], ppos::format::CURVE_COLUMNS.join(","));
    assert!(lines[1].starts_with("0,200,"));
    assert!(lines[3].starts_with("2,600,"));
    assert_valid("summary.schema.json", &cell.join("summary.json"));
    let policy = ppos::format::policy_from_str(&fs::read_to_string(cell.join("policy.ckpt")).unwrap()).unwrap();
    assert_eq!((policy.obs_dim(), policy.action_dim()), (6, 2));
    let critic = ppos::format::critic_from_str(&fs::read_to_string(cell.join("critic.ckpt")).unwrap()).unwrap();
    assert_eq!(critic.value_net().layout().hidden, 8);
}

#[test]
fn alpha_with_ppo_warns_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--variant", "ppo", "--alpha", "0.5", "--out", dir.path().to_str().unwrap()];
    args.extend(SMALL);
    let o = ppos(&args);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("alpha is ignored for ppo"));
    assert!(dir.path().join("reacher2d-ppo-a0-e0.2-s0/curve.csv").exists());
}

#[test]
fn bad_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = ppos(&["train", "--epsilon", "1.5", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon must be in (0,1)"));
    assert_eq!(ppos(&["train", "--epochs", "abc"]).status.code(), Some(2));
    assert_eq!(ppos(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(ppos(&["train", "--env", "humanoid"]).status.code(), Some(2));
    assert_eq!(ppos(&["train", "--variant", "trpo"]).status.code(), Some(2));
    assert_eq!(ppos(&["train", "--variant", "pporb", "--alpha", "-0.1"]).status.code(), Some(2));
    assert_eq!(ppos(&["compare", "--seeds", "1,1", "--out", out]).status.code(), Some(2));
    assert_eq!(ppos(&["compare", "--variants", "ppo,ppo", "--out", out]).status.code(), Some(2));
    assert_eq!(read_tree(dir.path()).len(), 0, "nothing is written on bad input");
}

#[test]
fn diverging_run_exits_3_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--lr", "1e300", "--out", dir.path().to_str().unwrap()];
    args.extend(SMALL);
    let o = ppos(&args);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let diag: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("reacher2d-ppo-a0-e0.2-s0/diagnostics.json")).unwrap())
            .unwrap();
    assert_eq!(diag["abort"]["epoch"], 0);
    assert!(diag["abort"]["statistic"].is_string());
    assert!(diag["abort"]["minibatch"].is_u64());
}

#[test]
fn plan_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    fs::write(
        &plan,
        r#"{"base": {"epochs": 2, "steps_per_epoch": 150, "hidden_dim": 8, "seed": 5, "variant": "pporb"}}"#,
    )
    .unwrap();
    let out = dir.path().join("runs");
    let o = ppos(&[
        "train",
        "--plan",
        plan.to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out.join("reacher2d-pporb-a0.3-e0.2-s7/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 7);
    assert_eq!(summary["config"]["epochs"], 2);
    assert_eq!(summary["config"]["steps_per_epoch"], 150);
    assert_eq!(summary["config"]["batch_size"], 128);

    fs::write(&plan, r#"{"base": {"epochz": 2}}"#).unwrap();
    assert_eq!(ppos(&["train", "--plan", plan.to_str().unwrap()]).status.code(), Some(2));
}

fn compare_into(out: &Path) -> Output {
    let mut args = vec!["compare", "--env", "reacher2d", "--seeds", "1..2", "--window", "2", "--jobs", "2", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    ppos(&args)
}

#[test]
fn compare_grid_is_complete_and_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = compare_into(&a);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(compare_into(&b).status.code(), Some(0));

    let table: Value = serde_json::from_str(&fs::read_to_string(a.join("table1.json")).unwrap()).unwrap();
    assert_valid("table.schema.json", &a.join("table1.json"));
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert_eq!(row["runs"], 2);
        assert_eq!(row["per_seed"].as_array().unwrap().len(), 2);
    }
    let curves: Vec<_> = fs::read_dir(a.join("curves")).unwrap().collect();
    assert_eq!(curves.len(), 6);
    let band = fs::read_to_string(a.join("curves/ppos_reward.csv")).unwrap();
    assert_eq!(band.lines().next(), Some("epoch,runs,mean,std,p20,p80"));
    assert_eq!(band.lines().count(), 4);
    let cells = fs::read_dir(&a).unwrap().filter(|e| e.as_ref().unwrap().path().join("curve.csv").exists()).count();
    assert_eq!(cells, 6);

    assert_eq!(read_tree(&a), read_tree(&b));
}

#[test]
fn alpha_sweep_accepts_negative_and_rejects_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let mut args = vec![
        "alpha-sweep", "--env", "pointmass-n2", "--alphas", "-0.1,0.2", "--seeds", "1", "--window", "2", "--out",
        out.to_str().unwrap(),
    ];
    args.extend(SMALL);
    let o = ppos(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_valid("alpha_sweep.schema.json", &out.join("alpha_sweep.json"));
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("alpha_sweep.json")).unwrap()).unwrap();
    assert_eq!(doc["table"]["rows"].as_array().unwrap().len(), 2);
    assert_eq!(doc["obs_dim"], 6);
    assert!(stdout(&o).contains("best alpha"));

    let o = ppos(&["alpha-sweep", "--alphas", "0.1,0.2,0.1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("duplicate alpha"));
}

#[test]
fn verify_prints_alpha_table_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = ppos(&[
        "verify",
        "--alpha-table",
        "3,8,17,111,376",
        "--beta-grid",
        "1e-5..1e-1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(!text.contains("[FAIL]"));
    assert!(text.contains("[DATA]"));
    let table: Vec<&str> = text
        .lines()
        .skip_while(|l| !l.starts_with("obs_dim"))
        .skip(1)
        .take_while(|l| !l.is_empty())
        .collect();
    assert_eq!(table.len(), 5);
    assert!(table[4].starts_with("376") && table[4].ends_with("0.05"));
    assert!(table[0].starts_with("3 ") && table[0].ends_with('-'));
    let path = dir.path().join("theorem_report.json");
    assert_valid("theorem_report.schema.json", &path);
    let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["theorem"]["reports"].as_array().unwrap().len(), 20);
    assert_eq!(doc["theorem"]["beta_grid"].as_array().unwrap().len(), 5);

    assert_eq!(ppos(&["verify", "--beta-grid", "1e-1..1e-5"]).status.code(), Some(2));
    assert_eq!(ppos(&["verify", "--alpha-table", "0"]).status.code(), Some(2));
}

#[test]
fn schema_validator_rejects_mismatches() {
    let schema = load_schema("train_config.schema.json");
    let good = serde_json::to_value(ppos_core::TrainConfig::default()).unwrap();
    assert!(validate(&schema, &good, "$").is_ok());
    let mut extra = good.clone();
    extra["surprise"] = Value::Bool(true);
    assert!(validate(&schema, &extra, "$").is_err());
    let mut wrong = good.clone();
    wrong["epochs"] = Value::from(1.5);
    assert!(validate(&schema, &wrong, "$").is_err());
    let mut missing = good;
    missing.as_object_mut().unwrap().remove("seed");
    assert!(validate(&schema, &missing, "$").is_err());
}
