//! Trace-driven debloating for WebAssembly 1.0 modules.
//!
//! The crate runs a workload in a tracing interpreter ([`interp`]), derives
//! which functions the workload needs ([`trace`]), rewrites the module to
//! stub or drop the rest ([`shrink`]) and replays the workload to confirm the
//! result behaves the same ([`pipeline`]).

pub mod interp;
pub mod pipeline;
pub mod shrink;
pub mod trace;
pub mod wasm;

#[cfg(feature = "testgen")]
pub mod testgen;
