use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(rel: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", rel].iter().collect();
    p.to_string_lossy().into_owned()
}

fn vro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vro"))
        .args(args)
        .env_remove("VRO_CONFIG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn validate_minimal_program() {
    let o = vro(&["validate", &fixture("minimal.vro"), "--json"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["valid"], true);
    assert_eq!(v["diagnostics"].as_array().unwrap().len(), 0);
    let o = vro(&["validate", &fixture("minimal.vro")]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
}

#[test]
fn validate_reports_each_rule() {
    for rule in [
        "SyntaxForm",
        "UseBeforeDef",
        "Redefinition",
        "ArgType",
        "ArgDomain",
        "MissingArg",
        "ExtraArg",
        "UnknownOperatorArgs",
        "FinalLineForm",
        "EarlyResult",
        "MissingResult",
    ] {
        let o = vro(&["validate", &fixture(&format!("rules/{rule}.vro")), "--json"]);
        assert_eq!(code(&o), 1, "{rule}");
        let v = stdout_json(&o);
        let rules: Vec<&str> = v["diagnostics"].as_array().unwrap().iter().map(|d| d["rule"].as_str().unwrap()).collect();
        assert_eq!(rules, [rule]);
    }
}

#[test]
fn exec_no_elephant_exits_3() {
    let o = vro(&["--config", &fixture("vro.conf"), "exec", &fixture("no_elephant.vro"), &fixture("scenes/no_elephant.json"), "--trace"]);
    assert_eq!(code(&o), 3);
    let v = stdout_json(&o);
    assert_eq!(v["outcome"], "no_target");
    assert_eq!(v["box"], Value::Null);
    assert_eq!(v["terminated_at"], 1);
    assert_eq!(v["trace"]["terminated_at"], 1);
    assert_eq!(v["trace"]["steps"][1]["verdict"], "Skipped");
}

#[test]
fn exec_direction_fixtures() {
    let conf = fixture("vro.conf");
    let scene = fixture("scenes/person_elephant.json");
    let o = vro(&["--config", &conf, "exec", &fixture("person_left_of_elephant.vro"), &scene]);
    assert_eq!(code(&o), 3);
    assert_eq!(stdout_json(&o)["terminated_at"], 3);

    let o = vro(&["--config", &conf, "exec", &fixture("person_right_of_elephant.vro"), &scene]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["outcome"], "target_box");
    assert_eq!(v["box"], serde_json::json!([500.0, 240.0, 80.0, 200.0]));
}

#[test]
fn exec_missing_scene_data_is_error() {
    // default bank has 80 categories the fixture scene lacks
    let o = vro(&["exec", &fixture("person_right_of_elephant.vro"), &fixture("scenes/person_elephant.json")]);
    assert_eq!(code(&o), 12);
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing"));
}

#[test]
fn exec_rejects_invalid_program_and_bad_paths() {
    let o = vro(&["exec", &fixture("rules/MissingArg.vro"), &fixture("scenes/no_elephant.json")]);
    assert_eq!(code(&o), 11);
    assert!(String::from_utf8_lossy(&o.stderr).contains("MissingArg"));
    let o = vro(&["exec", &fixture("minimal.vro"), &fixture("does-not-exist.json")]);
    assert_eq!(code(&o), 10);
    let o = vro(&["exec", &fixture("minimal.vro"), &fixture("aux.json")]);
    assert_eq!(code(&o), 11);
}

#[test]
fn set_overrides_config_file() {
    // with early exit off the steps after the empty one still run
    let o = vro(&[
        "--config",
        &fixture("vro.conf"),
        "--set",
        "early_exit=false",
        "exec",
        &fixture("person_left_of_elephant.vro"),
        &fixture("scenes/person_elephant.json"),
        "--trace",
    ]);
    assert_eq!(code(&o), 3);
    let v = stdout_json(&o);
    assert_eq!(v["terminated_at"], 3);
    assert_eq!(v["trace"]["steps"][3]["verdict"], "Empty");

    let o = vro(&["--set", "no_such_key=1", "validate", &fixture("minimal.vro")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&vro(&[])), 2);
    assert_eq!(code(&vro(&["frobnicate"])), 2);
    assert_eq!(code(&vro(&["gen", "a dog"])), 2);
    assert_eq!(code(&vro(&["calibrate", &fixture("aux.json"), "--k", "0"])), 2);
}

#[test]
fn gen_from_canned() {
    let canned = fixture("canned.jsonl");
    let o = vro(&["gen", "elephant", "--canned", &canned]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout), "BOXES0 = FIND(object_name='elephant')\nFINAL_RESULT = RESULT(object=BOXES0)\n");
    assert_eq!(code(&vro(&["gen", "zebra", "--canned", &canned])), 4);
}

#[test]
fn gen_unreachable_endpoint_is_transport_error() {
    let o = vro(&["--set", "timeout_s=0.5", "--set", "transport_retries=0", "gen", "a dog", "--endpoint", "http://127.0.0.1:9/v1/chat/completions"]);
    assert_eq!(code(&o), 13);
}

#[test]
fn batch_keeps_scene_order_and_isolates_failures() {
    let o = vro(&[
        "--config",
        &fixture("vro.conf"),
        "batch",
        "person right of the elephant",
        &fixture("scenes"),
        "--canned",
        &fixture("canned.jsonl"),
        "--jobs",
        "2",
    ]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert!(results[0]["scene"].as_str().unwrap().ends_with("no_elephant.json"));
    assert_eq!(results[0]["outcome"], "failed");
    assert_eq!(results[1]["outcome"], "target_box");
    assert_eq!(v["counts"]["failed"], 1);
    assert_eq!(v["config"]["early_exit"], "true");
    assert_eq!(v["runtime"]["n"], 2);
}

#[test]
fn eval_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("items.csv");
    let o = vro(&[
        "--config",
        &fixture("vro.conf"),
        "eval",
        &fixture("items.jsonl"),
        "--canned",
        &fixture("canned.jsonl"),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["metrics"]["counts"], serde_json::json!({"tp": 1, "tn": 2, "fp": 0, "fn": 0}));
    assert_eq!(v["metrics"]["balanced_accuracy"], 1.0);
    assert_eq!(v["config"]["bank"].as_str().map(|b| b.ends_with("bank.txt")), Some(true));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("query,scene,verdict"));
    assert!(lines[3].contains("TruePositive"));

    let o = vro(&["--config", &fixture("vro.conf"), "eval", &fixture("items.jsonl"), "--canned", &fixture("canned.jsonl"), "--format", "text"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("balanced accuracy"));
}

#[test]
fn calibrate_fixture() {
    let o = vro(&["calibrate", &fixture("aux.json"), "--k", "10", "--aux-id", "fixture"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["schema"], "vro-thresholds/1");
    assert_eq!(v["thresholds"]["elephant"], 0.9);
    assert_eq!(v["n"], 10);

    // the written table loads back as a threshold config
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    assert_eq!(code(&vro(&["calibrate", &fixture("aux.json"), "-o", out.to_str().unwrap()])), 0);
    let table = vro::thresholds::parse_threshold_table(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(table.get("elephant"), Some(0.9));
    let o = vro(&[
        "--config",
        &fixture("vro.conf"),
        "--set",
        &format!("thresholds={}", out.display()),
        "exec",
        &fixture("no_elephant.vro"),
        &fixture("scenes/no_elephant.json"),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn env_sits_between_file_and_flags() {
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_vro"));
        c.env_remove("VRO_CONFIG").arg("--config").arg(fixture("vro.conf"));
        if let Some(e) = env {
            c.env("VRO_BANK", e);
        }
        if let Some(f) = flag {
            c.arg("--set").arg(format!("bank={f}"));
        }
        c.args(["batch", "elephant", &fixture("scenes"), "--canned", &fixture("canned.jsonl")]);
        let o = c.output().unwrap();
        let bank = serde_json::from_slice::<Value>(&o.stdout).ok().and_then(|v| v["config"]["bank"].as_str().map(str::to_owned));
        (code(&o), bank.unwrap_or_default(), String::from_utf8_lossy(&o.stderr).into_owned())
    };
    let bank = fixture("bank.txt");
    let (_, b, _) = run(None, None);
    assert!(b.ends_with("bank.txt"));
    let (c, _, err) = run(Some("/nonexistent/env-bank"), None);
    assert_eq!(c, 10, "{err}");
    assert!(err.contains("env-bank"));
    let (c, b, _) = run(Some("/nonexistent/env-bank"), Some(&bank));
    assert_eq!(c, 0);
    assert_eq!(b, bank);
}
