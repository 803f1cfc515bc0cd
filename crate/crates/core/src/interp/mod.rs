//! A tracing interpreter for validated MVP modules.
//!
//! Usage probes live in the interpreter itself rather than in rewritten
//! bytecode: a function is recorded as entered before its first instruction
//! runs, so a body that traps immediately is still observed.

mod compile;
mod exec;
mod numeric;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wasm::{ExternalKind, FuncType, Module, ValType};

pub use exec::{Instance, InstantiationFailure};

/// Instruction budget per invocation when a workload does not set one.
pub const DEFAULT_FUEL: u64 = 10_000_000;
/// Frames allowed on the call stack before `stack-exhausted`.
pub const MAX_CALL_DEPTH: usize = 4096;
/// Operand and local slots allowed across all frames.
pub const MAX_STACK_SLOTS: usize = 1 << 20;

/// A runtime value. Floats compare by bit pattern so that logs containing
/// NaNs are still comparable.
#[derive(Clone, Copy, Debug)]
pub enum Value {
    I32(i32),
    I64(i64),
    F32(f32),
    F64(f64),
}

impl Value {
    pub fn ty(&self) -> ValType {
        match self {
            Value::I32(_) => ValType::I32,
            Value::I64(_) => ValType::I64,
            Value::F32(_) => ValType::F32,
            Value::F64(_) => ValType::F64,
        }
    }

    pub fn default_for(ty: ValType) -> Value {
        match ty {
            ValType::I32 => Value::I32(0),
            ValType::I64 => Value::I64(0),
            ValType::F32 => Value::F32(0.0),
            ValType::F64 => Value::F64(0.0),
        }
    }

    fn bits(&self) -> u64 {
        match *self {
            Value::I32(v) => v as u32 as u64,
            Value::I64(v) => v as u64,
            Value::F32(v) => u64::from(v.to_bits()),
            Value::F64(v) => v.to_bits(),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.ty() == other.ty() && self.bits() == other.bits()
    }
}

impl Eq for Value {}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::I32(v) => write!(f, "i32:{v}"),
            Value::I64(v) => write!(f, "i64:{v}"),
            Value::F32(v) if v.is_nan() => write!(f, "f32:nan:0x{:08x}", v.to_bits()),
            Value::F64(v) if v.is_nan() => write!(f, "f64:nan:0x{:016x}", v.to_bits()),
            Value::F32(v) => write!(f, "f32:{v:?}"),
            Value::F64(v) => write!(f, "f64:{v:?}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrapKind {
    Unreachable,
    DivideByZero,
    IntegerOverflow,
    OutOfBoundsMemory,
    OutOfBoundsTable,
    IndirectCallTypeMismatch,
    UndefinedTableElement,
    StackExhausted,
    FuelExhausted,
}

impl TrapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrapKind::Unreachable => "unreachable",
            TrapKind::DivideByZero => "divide-by-zero",
            TrapKind::IntegerOverflow => "integer-overflow",
            TrapKind::OutOfBoundsMemory => "out-of-bounds-memory",
            TrapKind::OutOfBoundsTable => "out-of-bounds-table",
            TrapKind::IndirectCallTypeMismatch => "indirect-call-type-mismatch",
            TrapKind::UndefinedTableElement => "undefined-table-element",
            TrapKind::StackExhausted => "stack-exhausted",
            TrapKind::FuelExhausted => "fuel-exhausted",
        }
    }
}

impl fmt::Display for TrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A trap together with the function that was executing when it fired
/// (`None` for traps raised while initializing segments).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trap {
    pub kind: TrapKind,
    pub function: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InvocationOutcome {
    Results(Vec<Value>),
    Trap(Trap),
    LinkError(String),
}

impl fmt::Display for InvocationOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvocationOutcome::Results(vals) => {
                let vals: Vec<String> = vals.iter().map(Value::to_string).collect();
                write!(f, "results[{}]", vals.join(", "))
            }
            InvocationOutcome::Trap(t) => write!(f, "trap({})", t.kind),
            InvocationOutcome::LinkError(msg) => write!(f, "link-error({msg})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Invocation {
    pub export: String,
    pub args: Vec<Value>,
}

impl Invocation {
    pub fn new(export: impl Into<String>, args: impl Into<Vec<Value>>) -> Self {
        Invocation {
            export: export.into(),
            args: args.into(),
        }
    }
}

/// An ordered list of export invocations run against a single instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Workload {
    pub invocations: Vec<Invocation>,
    /// Instruction budget for each invocation (and for the start function).
    pub fuel: u64,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            invocations: Vec::new(),
            fuel: DEFAULT_FUEL,
        }
    }
}

impl Workload {
    pub fn new(invocations: impl Into<Vec<Invocation>>) -> Self {
        Workload {
            invocations: invocations.into(),
            ..Workload::default()
        }
    }

    pub fn with_fuel(mut self, fuel: u64) -> Self {
        self.fuel = fuel;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HostBehavior {
    /// Append the call and its arguments to the host-call log.
    Record,
    /// Record the call, then trap with `unreachable`.
    Abort,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HostFunction {
    pub module: String,
    pub name: String,
    pub ty: FuncType,
    pub behavior: HostBehavior,
}

/// The functions an instance may import, plus resource caps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HostConfig {
    pub functions: Vec<HostFunction>,
    /// Memories may not be created or grown beyond this many pages.
    pub max_memory_pages: u32,
}

impl HostConfig {
    /// No importable functions.
    pub fn empty() -> Self {
        HostConfig {
            functions: Vec::new(),
            max_memory_pages: 1024,
        }
    }

    pub fn find(&self, module: &str, name: &str) -> Option<&HostFunction> {
        self.functions
            .iter()
            .find(|f| f.module == module && f.name == name)
    }
}

impl Default for HostConfig {
    /// `env.log(i32)`, `env.log64(i64)` and `env.abort()`.
    fn default() -> Self {
        let f = |name: &str, params: &[ValType], behavior| HostFunction {
            module: "env".into(),
            name: name.into(),
            ty: FuncType::new(params, []),
            behavior,
        };
        HostConfig {
            functions: vec![
                f("log", &[ValType::I32], HostBehavior::Record),
                f("log64", &[ValType::I64], HostBehavior::Record),
                f("abort", &[], HostBehavior::Abort),
            ],
            ..HostConfig::empty()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HostCall {
    /// Qualified import name, e.g. `env.log`.
    pub import: String,
    pub args: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvocationRecord {
    pub invocation: Invocation,
    pub outcome: InvocationOutcome,
    pub host_calls: Vec<HostCall>,
}

/// Everything observable about one workload run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ObservationLog {
    /// Set when instantiation failed (link error, segment trap, start trap);
    /// `per_invocation` is then empty.
    pub instantiation_failure: Option<InvocationOutcome>,
    /// Host calls made by the start function.
    pub start_host_calls: Vec<HostCall>,
    pub per_invocation: Vec<InvocationRecord>,
    /// FNV-1a of linear memory after the last invocation, if there is one.
    pub final_memory_digest: Option<u64>,
}

/// Functions observed during a run, in the combined function index space.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExecutionTrace {
    /// Defined functions whose body began executing.
    pub entered: BTreeSet<u32>,
    /// Resolved targets of executed `call`/`call_indirect` instructions
    /// (recorded once the callee is entered, or for imports once invoked).
    pub call_targets: BTreeSet<u32>,
    /// Functions read out of a table slot by `call_indirect`, including
    /// those that then failed the signature check.
    pub table_observed: BTreeSet<u32>,
}

impl ExecutionTrace {
    pub fn is_empty(&self) -> bool {
        self.entered.is_empty() && self.call_targets.is_empty() && self.table_observed.is_empty()
    }

    /// Set-wise union, used to merge traces of separate runs.
    pub fn union(&self, other: &ExecutionTrace) -> ExecutionTrace {
        ExecutionTrace {
            entered: self.entered.union(&other.entered).copied().collect(),
            call_targets: self
                .call_targets
                .union(&other.call_targets)
                .copied()
                .collect(),
            table_observed: self
                .table_observed
                .union(&other.table_observed)
                .copied()
                .collect(),
        }
    }

    pub fn is_subset(&self, other: &ExecutionTrace) -> bool {
        self.entered.is_subset(&other.entered)
            && self.call_targets.is_subset(&other.call_targets)
            && self.table_observed.is_subset(&other.table_observed)
    }

    /// Every function index mentioned by any of the three sets.
    pub fn all_functions(&self) -> BTreeSet<u32> {
        let mut all = self.entered.clone();
        all.extend(&self.call_targets);
        all.extend(&self.table_observed);
        all
    }

    /// Checks the containment rules that hold for every run: imports are
    /// never entered, and every defined call target was entered.
    pub fn containment_violations(&self, m: &Module) -> Vec<String> {
        let imported = m.num_imported_functions();
        let mut out = Vec::new();
        for f in self.entered.iter().filter(|f| **f < imported) {
            out.push(format!("imported function {f} recorded as entered"));
        }
        for f in self.call_targets.difference(&self.entered) {
            if *f >= imported {
                out.push(format!("call target {f} was never entered"));
            }
        }
        out
    }

    /// Table reads whose function was neither entered nor called. Only a
    /// signature-mismatch trap or stack exhaustion on entry leaves entries here.
    pub fn unresolved_table_reads(&self) -> BTreeSet<u32> {
        self.table_observed
            .iter()
            .filter(|f| !self.entered.contains(f) && !self.call_targets.contains(f))
            .copied()
            .collect()
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum InvokeError {
    #[error("unknown export \"{0}\"")]
    UnknownExport(String),
    #[error("signature mismatch calling \"{export}\": expected {expected}, got {got:?}")]
    SignatureMismatch {
        export: String,
        expected: FuncType,
        got: Vec<ValType>,
    },
}

/// Checks that every invocation names a function export and passes
/// arguments matching its signature.
pub fn check_workload(m: &Module, w: &Workload) -> Result<(), InvokeError> {
    for inv in &w.invocations {
        let func = m
            .exports
            .iter()
            .find(|e| e.kind == ExternalKind::Func && e.name == inv.export)
            .map(|e| e.index)
            .ok_or_else(|| InvokeError::UnknownExport(inv.export.clone()))?;
        let ty = m
            .func_type(func)
            .ok_or_else(|| InvokeError::UnknownExport(inv.export.clone()))?;
        let got: Vec<ValType> = inv.args.iter().map(Value::ty).collect();
        if got != ty.params {
            return Err(InvokeError::SignatureMismatch {
                export: inv.export.clone(),
                expected: ty.clone(),
                got,
            });
        }
    }
    Ok(())
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Runs `w` in order against a single fresh instance of `m`, collecting the
/// observation log and the cumulative execution trace (start function
/// included). A trapping invocation does not stop later ones.
pub fn run_workload(
    m: &Module,
    w: &Workload,
    host: &HostConfig,
) -> Result<(ObservationLog, ExecutionTrace), InvokeError> {
    check_workload(m, w)?;
    let mut log = ObservationLog::default();
    let mut instance = match Instance::instantiate(m, host, w.fuel) {
        Ok(instance) => instance,
        Err(failure) => {
            log.instantiation_failure = Some(failure.outcome);
            log.start_host_calls = failure.host_calls;
            return Ok((log, failure.trace));
        }
    };
    log.start_host_calls = instance.take_host_calls();
    for inv in &w.invocations {
        let outcome = instance.invoke(&inv.export, &inv.args, w.fuel)?;
        log.per_invocation.push(InvocationRecord {
            invocation: inv.clone(),
            outcome,
            host_calls: instance.take_host_calls(),
        });
    }
    log.final_memory_digest = instance.memory().map(fnv1a64);
    Ok((log, instance.into_trace()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn values_compare_bitwise() {
        assert_eq!(Value::F32(f32::NAN), Value::F32(f32::NAN));
        assert_ne!(Value::F64(0.0), Value::F64(-0.0));
        assert_ne!(Value::I32(0), Value::I64(0));
        assert_eq!(Value::I32(-1).to_string(), "i32:-1");
    }

    #[test]
    fn trap_kind_names() {
        assert_eq!(
            TrapKind::IndirectCallTypeMismatch.to_string(),
            "indirect-call-type-mismatch"
        );
        assert_eq!(TrapKind::FuelExhausted.as_str(), "fuel-exhausted");
    }
}
