mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::fixtures_dir;
use debloat_core::shrink::stub_body;
use debloat_core::wasm::{decode, encode};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wasm-debloat"))
        .args(args)
        .output()
        .unwrap()
}

fn fixture(name: &str) -> String {
    fixtures_dir().join(name).to_string_lossy().into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn debloat_calculator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("calc.wasm");
    let report = dir.path().join("report.json");
    let o = run(&[
        "debloat",
        "--module",
        &fixture("calculator.wasm"),
        "--workload",
        &fixture("calculator.workload.json"),
        "--out",
        path(&out),
        "--report",
        path(&report),
        "--fail-on-behavior-change",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(doc["stats"]["functionsKeptBody"], 4);
    assert_eq!(doc["validation"]["behavioralOk"], true);
    assert!(decode(&fs::read(&out).unwrap()).is_ok());

    let v = run(&[
        "validate",
        "--original",
        &fixture("calculator.wasm"),
        "--debloated",
        path(&out),
        "--workload",
        &fixture("calculator.workload.json"),
    ]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(stdout_json(&v)["syntacticOk"], true);
}

#[test]
fn report_goes_to_stdout_without_report_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("add.wasm");
    let o = run(&[
        "debloat",
        "--module",
        &fixture("add.wasm"),
        "--workload",
        &fixture("add.workload.json"),
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["keepRatio"], 100.0);
}

#[test]
fn reports_are_deterministic_modulo_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let mut docs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("o{i}.wasm"));
        let o = run(&[
            "debloat",
            "--module",
            &fixture("calculator.wasm"),
            "--workload",
            &fixture("calculator.workload.json"),
            "--out",
            path(&out),
        ]);
        let mut doc = stdout_json(&o);
        doc["timestamp"] = serde_json::Value::Null;
        docs.push(serde_json::to_string(&doc).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
}

#[test]
fn missing_module_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "debloat",
        "--module",
        "/nonexistent/x.wasm",
        "--workload",
        &fixture("add.workload.json"),
        "--out",
        path(&dir.path().join("o.wasm")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/x.wasm"));
}

#[test]
fn malformed_workload_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    fs::write(
        &w,
        "{\n  \"invocations\": [\n    {\"func\": \"add\", \"argz\": []}\n  ]\n}\n",
    )
    .unwrap();
    let o = run(&[
        "debloat",
        "--module",
        &fixture("add.wasm"),
        "--workload",
        path(&w),
        "--out",
        path(&dir.path().join("o.wasm")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn missing_flags_are_usage_errors() {
    assert_eq!(
        run(&["debloat", "--module", "x.wasm"]).status.code(),
        Some(64)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn trace_documents() {
    let o = run(&[
        "trace",
        "--module",
        &fixture("main_helper.wasm"),
        "--workload",
        &fixture("main_helper.workload.json"),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let doc = stdout_json(&o);
    assert_eq!(doc["entered"], serde_json::json!([0, 1]));
    assert_eq!(doc["callTargets"], serde_json::json!([1]));

    let o = run(&[
        "trace",
        "--module",
        &fixture("main_helper.wasm"),
        "--workload",
        &fixture("empty.workload.json"),
    ]);
    assert_eq!(
        stdout_json(&o),
        serde_json::json!({"entered": [], "callTargets": [], "tableObserved": []})
    );
}

#[test]
fn trace_with_unknown_export_fails() {
    let o = run(&[
        "trace",
        "--module",
        &fixture("add.wasm"),
        "--workload",
        &fixture("main_helper.workload.json"),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validate_module_against_itself_and_over_debloated() {
    let o = run(&[
        "validate",
        "--original",
        &fixture("add.wasm"),
        "--debloated",
        &fixture("add.wasm"),
        "--workload",
        &fixture("add.workload.json"),
    ]);
    assert_eq!(o.status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let mut m = decode(&fs::read(fixture("add.wasm")).unwrap()).unwrap();
    m.functions[0] = stub_body(&m.functions[0]);
    let broken = dir.path().join("broken.wasm");
    fs::write(&broken, encode(&m).unwrap()).unwrap();
    let o = run(&[
        "validate",
        "--original",
        &fixture("add.wasm"),
        "--debloated",
        path(&broken),
        "--workload",
        &fixture("add.workload.json"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains(
            "invocation 0: outcome: original results[i32:5] but debloated trap(unreachable)"
        ),
        "{err}"
    );
}

#[test]
fn stats_output() {
    let o = run(&["stats", "--module", &fixture("empty.wasm")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["totalBytes"], 8);

    let o = run(&["stats", "--module", &fixture("calculator.wasm")]);
    let doc = stdout_json(&o);
    assert_eq!(doc["definedFunctions"], 10);
    let code = doc["sections"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["section"] == "code")
        .unwrap();
    assert!(code["bytes"].as_u64().unwrap() > 0);
}

#[test]
fn stats_show_code_shrinkage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("calc.wasm");
    run(&[
        "debloat",
        "--module",
        &fixture("calculator.wasm"),
        "--workload",
        &fixture("calculator.workload.json"),
        "--out",
        path(&out),
    ]);
    let code = |p: &str| -> u64 {
        let doc = stdout_json(&run(&["stats", "--module", p]));
        doc["sections"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["section"] == "code")
            .unwrap()["bytes"]
            .as_u64()
            .unwrap()
    };
    assert!(code(path(&out)) < code(&fixture("calculator.wasm")));
}
