mod common;

use std::collections::BTreeSet;

use common::*;
use debloat_core::interp::{
    run_workload, HostCall, HostConfig, InvocationOutcome, ObservationLog, TrapKind, Value,
};
use debloat_core::pipeline::{debloat_module, Options};
use debloat_core::trace::Disposition::{self, *};
use debloat_core::wasm::{decode, encode, section_sizes, validate_module, SectionId};
use serde_json::{json, Value as Json};

fn value_json(v: &Value) -> Json {
    match v {
        Value::I32(x) => json!({ "i32": x }),
        Value::I64(x) => json!({ "i64": x.to_string() }),
        Value::F32(x) => json!({ "f32": format!("0x{:08x}", x.to_bits()) }),
        Value::F64(x) => json!({ "f64": format!("0x{:016x}", x.to_bits()) }),
    }
}

fn calls_json(calls: &[HostCall]) -> Json {
    Json::Array(
        calls
            .iter()
            .map(|c| json!({ "import": c.import, "args": c.args.iter().map(value_json).collect::<Vec<_>>() }))
            .collect(),
    )
}

fn outcome_json(o: &InvocationOutcome) -> Json {
    match o {
        InvocationOutcome::Results(vs) => {
            json!({ "results": vs.iter().map(value_json).collect::<Vec<_>>() })
        }
        InvocationOutcome::Trap(t) => json!({ "trap": t.kind.as_str() }),
        InvocationOutcome::LinkError(msg) => json!({ "linkError": msg }),
    }
}

fn log_json(log: &ObservationLog, memory_exported: bool) -> Json {
    json!({
        "instantiation": log.instantiation_failure.as_ref().map_or(json!("ok"), outcome_json),
        "startHostCalls": calls_json(&log.start_host_calls),
        "invocations": log.per_invocation.iter().map(|r| json!({
            "outcome": outcome_json(&r.outcome),
            "hostCalls": calls_json(&r.host_calls),
        })).collect::<Vec<_>>(),
        "memoryDigest": if memory_exported {
            log.final_memory_digest.map(|d| json!(format!("{d:016x}"))).unwrap_or(Json::Null)
        } else {
            Json::Null
        },
    })
}

fn opts() -> Options {
    Options {
        timestamp: Some("1970-01-01T00:00:00Z".into()),
        ..Options::default()
    }
}

#[test]
fn corpus_is_large_enough() {
    assert!(fixture_names().len() >= 20);
}

#[test]
fn outcomes_match_reference_interpreter() {
    for name in fixture_names() {
        let m = decode(&fixture_bytes(&name)).unwrap();
        let (log, _) = run_workload(&m, &fixture_workload(&name), &HostConfig::default()).unwrap();
        let memory_exported = m.exports.iter().any(|e| e.name == "memory");
        assert_eq!(
            log_json(&log, memory_exported),
            fixture_expected(&name),
            "{name}"
        );
    }
}

#[test]
fn decoder_agrees_with_wasmparser() {
    for name in fixture_names() {
        let bytes = fixture_bytes(&name);
        let ours = decode(&bytes).unwrap();
        assert!(validate_module(&ours).ok(), "{name}");
        let mut validator =
            wasmparser::Validator::new_with_features(wasmparser::WasmFeatures::WASM1);
        validator.validate_all(&bytes).unwrap();

        let mut functions = 0;
        let mut exports = 0;
        for payload in wasmparser::Parser::new(0).parse_all(&bytes) {
            match payload.unwrap() {
                wasmparser::Payload::FunctionSection(r) => functions = r.count(),
                wasmparser::Payload::ExportSection(r) => exports = r.count(),
                _ => {}
            }
        }
        assert_eq!(ours.functions.len() as u32, functions, "{name}");
        assert_eq!(ours.exports.len() as u32, exports, "{name}");

        let reencoded = encode(&ours).unwrap();
        wasmparser::Validator::new_with_features(wasmparser::WasmFeatures::WASM1)
            .validate_all(&reencoded)
            .unwrap();
        assert_eq!(decode(&reencoded).unwrap(), ours, "{name}");
    }
}

#[test]
fn add_fixture_shape() {
    let bytes = fixture_bytes("add");
    let m = decode(&bytes).unwrap();
    assert_eq!(
        (m.types.len(), m.functions.len(), m.exports.len()),
        (1, 1, 1)
    );
    let sizes = section_sizes(&bytes).unwrap();
    for id in [
        SectionId::Type,
        SectionId::Function,
        SectionId::Export,
        SectionId::Code,
    ] {
        assert!(sizes[&id] > 0);
    }
    assert_eq!(sizes.values().sum::<usize>() + 8, bytes.len());
}

fn set(items: &[u32]) -> BTreeSet<u32> {
    items.iter().copied().collect()
}

fn dispositions(name: &str) -> Vec<Disposition> {
    let out = debloat_module(&fixture_bytes(name), &fixture_workload(name), &opts()).unwrap();
    assert!(
        out.report.validation.ok(),
        "{name}: {:?}",
        out.report.validation
    );
    out.plan.disposition
}

#[test]
fn main_helper_trace_and_plan() {
    let m = decode(&fixture_bytes("main_helper")).unwrap();
    let (_, trace) =
        run_workload(&m, &fixture_workload("main_helper"), &HostConfig::default()).unwrap();
    assert_eq!(trace.entered, set(&[0, 1]));
    assert_eq!(trace.call_targets, set(&[1]));
    assert_eq!(dispositions("main_helper"), [KeepBody, KeepBody, Remove]);
}

#[test]
fn three_funcs_plan() {
    assert_eq!(dispositions("three_funcs"), [KeepBody, Remove, Stub]);
}

#[test]
fn indirect_trace_and_plan() {
    let m = decode(&fixture_bytes("indirect")).unwrap();
    let (_, trace) =
        run_workload(&m, &fixture_workload("indirect"), &HostConfig::default()).unwrap();
    assert_eq!(trace.table_observed, set(&[2]));
    assert_eq!(trace.entered, set(&[0, 2]));
    assert_eq!(dispositions("indirect"), [KeepBody, Stub, KeepBody]);
}

#[test]
fn unused_import_is_dropped() {
    let name = "unused_import";
    let out = debloat_module(&fixture_bytes(name), &fixture_workload(name), &opts()).unwrap();
    assert_eq!(out.plan.removed_imports, set(&[0]));
    assert_eq!(out.plan.func_remap, [None, Some(0)]);
    let shrunk = decode(&out.bytes).unwrap();
    assert!(shrunk.imports.is_empty());
    assert!(out.report.validation.ok());
}

#[test]
fn start_function_is_kept() {
    // imports: log(0); defined: init(1), ready(2), unused(3)
    assert_eq!(dispositions("start"), [KeepBody, KeepBody, KeepBody, Stub]);
}

#[test]
fn instantiation_traps_survive_debloat() {
    for name in ["elem_oob", "data_oob", "start_trap"] {
        let out = debloat_module(&fixture_bytes(name), &fixture_workload(name), &opts()).unwrap();
        assert!(out.report.validation.ok(), "{name}");
        let m = decode(&out.bytes).unwrap();
        let (log, _) = run_workload(&m, &fixture_workload(name), &HostConfig::default()).unwrap();
        assert!(
            matches!(log.instantiation_failure, Some(InvocationOutcome::Trap(_))),
            "{name}"
        );
    }
}

#[test]
fn name_section_is_remapped() {
    use debloat_core::wasm::names::NameSection;
    let name = "name_section";
    let before = decode(&fixture_bytes(name)).unwrap();
    assert!(before.custom_sections.iter().any(|c| c.name == "name"));
    let out = debloat_module(&fixture_bytes(name), &fixture_workload(name), &opts()).unwrap();
    let after = decode(&out.bytes).unwrap();
    let names = NameSection::parse(&after.custom_sections[0].data).unwrap();
    assert_eq!(names.module.as_deref(), Some("named"));
    assert_eq!(names.functions, [(0, "square".into()), (1, "cube".into())]);
    assert_eq!(after.functions.len(), 2);
}

#[test]
fn link_errors_are_reported() {
    let m = decode(&fixture_bytes("link_error")).unwrap();
    let (log, trace) =
        run_workload(&m, &fixture_workload("link_error"), &HostConfig::default()).unwrap();
    assert!(matches!(
        log.instantiation_failure,
        Some(InvocationOutcome::LinkError(_))
    ));
    assert!(log.per_invocation.is_empty());
    assert!(trace.is_empty());
    assert!(debloat_module(
        &fixture_bytes("link_error"),
        &fixture_workload("link_error"),
        &opts()
    )
    .is_err());
}

#[test]
fn stack_exhaustion_is_a_trap() {
    let m = decode(&fixture_bytes("recursion")).unwrap();
    let (log, trace) =
        run_workload(&m, &fixture_workload("recursion"), &HostConfig::default()).unwrap();
    assert!(matches!(
        &log.per_invocation[2].outcome,
        InvocationOutcome::Trap(t) if t.kind == TrapKind::StackExhausted
    ));
    assert!(trace.containment_violations(&m).is_empty());
}
