#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use debloat_core::interp::Workload;
use wasm_debloat::doc::WorkloadDocument;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Names of all fixtures, sorted.
pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(fixtures_dir())
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.strip_suffix(".wasm").map(str::to_owned)
        })
        .collect();
    names.sort();
    names
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    fs::read(fixtures_dir().join(format!("{name}.wasm"))).unwrap()
}

pub fn fixture_workload(name: &str) -> Workload {
    let text = fs::read_to_string(fixtures_dir().join(format!("{name}.workload.json"))).unwrap();
    WorkloadDocument::parse(&text).unwrap().to_workload()
}

pub fn fixture_expected(name: &str) -> serde_json::Value {
    let text = fs::read_to_string(fixtures_dir().join(format!("{name}.expected.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Fixtures whose module cannot be instantiated against the default host.
pub const UNLINKABLE: &[&str] = &["link_error"];
