//! Trace, remove, validate: the end-to-end debloat and its report.

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::{
    run_workload, ExecutionTrace, HostCall, HostConfig, InvocationOutcome, InvokeError,
    ObservationLog, Workload,
};
use crate::shrink::{apply_plan, shrink_stats, PlanMismatch, ShrinkStats};
use crate::trace::{close_references, consolidate, Disposition, KeepPlan, TraceError};
use crate::wasm::{
    decode, encode, validate_module, DecodeError, EncodeError, Module, ValidationReport,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default)]
pub struct Options {
    /// Report a behavior change as [`PipelineError::ValidationFailed`].
    pub fail_on_behavior_change: bool,
    pub host: HostConfig,
    /// Overrides the report timestamp, for reproducible output.
    pub timestamp: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Mismatch {
    /// Index into the workload, or `None` for instantiation and final state.
    pub invocation: Option<usize>,
    pub field: String,
    pub original: String,
    pub debloated: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ValidationVerdict {
    pub syntactic_ok: bool,
    pub behavioral_ok: bool,
    pub mismatches: Vec<Mismatch>,
}

impl ValidationVerdict {
    pub fn ok(&self) -> bool {
        self.syntactic_ok && self.behavioral_ok
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TraceSummary {
    pub entered: usize,
    pub call_targets: usize,
    pub table_observed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DebloatReport {
    pub stats: ShrinkStats,
    pub keep_ratio: f64,
    pub stub_ratio: f64,
    pub remove_ratio: f64,
    pub bytes_saved_percent: f64,
    pub trace_summary: TraceSummary,
    pub validation: ValidationVerdict,
    pub tool_version: String,
    pub timestamp: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DebloatOutput {
    pub bytes: Vec<u8>,
    pub report: DebloatReport,
    pub plan: KeepPlan,
    pub trace: ExecutionTrace,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("input module is invalid: {}", .0.errors.first().map(ToString::to_string).unwrap_or_default())]
    InvalidModule(ValidationReport),
    #[error(transparent)]
    Invoke(#[from] InvokeError),
    #[error("module cannot be instantiated: {0}")]
    Link(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Plan(#[from] PlanMismatch),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("debloated module does not preserve the workload's behavior")]
    ValidationFailed(Box<DebloatOutput>),
}

/// Runs the whole procedure on `input` and returns the debloated bytes.
///
/// The trace run's observation log doubles as the oracle: execution is
/// deterministic, so running the original again would reproduce it.
pub fn debloat_module(
    input: &[u8],
    w: &Workload,
    opts: &Options,
) -> Result<DebloatOutput, PipelineError> {
    let m = decode(input)?;
    let report = validate_module(&m);
    if !report.ok() {
        return Err(PipelineError::InvalidModule(report));
    }
    let (obs, trace) = run_workload(&m, w, &opts.host)?;
    if let Some(InvocationOutcome::LinkError(msg)) = &obs.instantiation_failure {
        return Err(PipelineError::Link(msg.clone()));
    }

    let roots = consolidate(&trace, &m)?;
    let plan = close_references(&m, &roots);
    let bytes = encode(&apply_plan(&m, &plan)?)?;

    let verdict = verdict_against(&obs, &bytes, w, &opts.host);
    let stats = shrink_stats(input, &bytes, &plan)?;
    let mut report = build_report(&m, &plan, stats, verdict, &trace);
    if let Some(ts) = &opts.timestamp {
        report.timestamp = ts.clone();
    }
    let out = DebloatOutput {
        bytes,
        report,
        plan,
        trace,
    };
    if opts.fail_on_behavior_change && !out.report.validation.ok() {
        return Err(PipelineError::ValidationFailed(Box::new(out)));
    }
    Ok(out)
}

fn failed(field: &str, original: impl ToString, debloated: impl ToString) -> Mismatch {
    Mismatch {
        invocation: None,
        field: field.into(),
        original: original.to_string(),
        debloated: debloated.to_string(),
    }
}

fn observe(
    bytes: &[u8],
    w: &Workload,
    host: &HostConfig,
) -> Result<(Module, ObservationLog), String> {
    let m = decode(bytes).map_err(|e| e.to_string())?;
    let (log, _) = run_workload(&m, w, host).map_err(|e| e.to_string())?;
    Ok((m, log))
}

fn verdict_against(
    obs: &ObservationLog,
    debloated: &[u8],
    w: &Workload,
    host: &HostConfig,
) -> ValidationVerdict {
    match observe(debloated, w, host) {
        Ok((m, log)) => {
            let mismatches = compare_logs(obs, &log);
            ValidationVerdict {
                syntactic_ok: validate_module(&m).ok(),
                behavioral_ok: mismatches.is_empty(),
                mismatches,
            }
        }
        Err(e) => ValidationVerdict {
            syntactic_ok: false,
            behavioral_ok: false,
            mismatches: vec![failed("module", "ok", e)],
        },
    }
}

/// Replays `w` on both modules and compares what was observed.
pub fn validate_behavior(
    original: &[u8],
    debloated: &[u8],
    w: &Workload,
    host: &HostConfig,
) -> ValidationVerdict {
    match observe(original, w, host) {
        Ok((_, obs)) => verdict_against(&obs, debloated, w, host),
        Err(e) => {
            let deb = observe(debloated, w, host);
            ValidationVerdict {
                syntactic_ok: deb.as_ref().is_ok_and(|(m, _)| validate_module(m).ok()),
                behavioral_ok: false,
                mismatches: vec![failed(
                    "module",
                    e,
                    deb.map_or_else(|e| e, |_| "ok".to_string()),
                )],
            }
        }
    }
}

/// Outcomes match when results are bitwise equal or both trap with the same
/// kind. The trapping function's index is not compared since indices move.
pub fn outcomes_equivalent(a: &InvocationOutcome, b: &InvocationOutcome) -> bool {
    match (a, b) {
        (InvocationOutcome::Trap(x), InvocationOutcome::Trap(y)) => x.kind == y.kind,
        _ => a == b,
    }
}

fn describe_calls(calls: &[HostCall]) -> String {
    let parts: Vec<String> = calls
        .iter()
        .map(|c| {
            let args: Vec<String> = c.args.iter().map(ToString::to_string).collect();
            format!("{}({})", c.import, args.join(", "))
        })
        .collect();
    format!("[{}]", parts.join(", "))
}

fn describe_instantiation(failure: &Option<InvocationOutcome>) -> String {
    failure
        .as_ref()
        .map_or_else(|| "ok".to_string(), ToString::to_string)
}

/// Lists every observable difference between two observation logs.
pub fn compare_logs(original: &ObservationLog, debloated: &ObservationLog) -> Vec<Mismatch> {
    let mut out = Vec::new();
    let same_instantiation = match (
        &original.instantiation_failure,
        &debloated.instantiation_failure,
    ) {
        (None, None) => true,
        (Some(a), Some(b)) => outcomes_equivalent(a, b),
        _ => false,
    };
    if !same_instantiation {
        out.push(failed(
            "instantiation",
            describe_instantiation(&original.instantiation_failure),
            describe_instantiation(&debloated.instantiation_failure),
        ));
    }
    if original.start_host_calls != debloated.start_host_calls {
        out.push(failed(
            "startHostCalls",
            describe_calls(&original.start_host_calls),
            describe_calls(&debloated.start_host_calls),
        ));
    }
    if original.per_invocation.len() != debloated.per_invocation.len() {
        out.push(failed(
            "invocationCount",
            original.per_invocation.len(),
            debloated.per_invocation.len(),
        ));
    }
    for (i, (a, b)) in original
        .per_invocation
        .iter()
        .zip(&debloated.per_invocation)
        .enumerate()
    {
        if !outcomes_equivalent(&a.outcome, &b.outcome) {
            out.push(Mismatch {
                invocation: Some(i),
                ..failed("outcome", &a.outcome, &b.outcome)
            });
        }
        if a.host_calls != b.host_calls {
            out.push(Mismatch {
                invocation: Some(i),
                ..failed(
                    "hostCalls",
                    describe_calls(&a.host_calls),
                    describe_calls(&b.host_calls),
                )
            });
        }
    }
    if original.final_memory_digest != debloated.final_memory_digest {
        let show = |d: Option<u64>| d.map_or_else(|| "none".to_string(), |d| format!("{d:016x}"));
        out.push(failed(
            "finalMemoryDigest",
            show(original.final_memory_digest),
            show(debloated.final_memory_digest),
        ));
    }
    out
}

fn percent(part: usize, whole: usize) -> f64 {
    round2(100.0 * part as f64 / whole as f64)
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Computes the report metrics. Ratios are over defined functions; a module
/// with none counts as fully kept.
pub fn build_report(
    m: &Module,
    plan: &KeepPlan,
    stats: ShrinkStats,
    verdict: ValidationVerdict,
    trace: &ExecutionTrace,
) -> DebloatReport {
    let first = m.num_imported_functions();
    let defined = m.functions.len();
    let (keep_ratio, stub_ratio, remove_ratio) = if defined == 0 {
        (100.0, 0.0, 0.0)
    } else {
        (
            percent(plan.count_from(first, Disposition::KeepBody), defined),
            percent(plan.count_from(first, Disposition::Stub), defined),
            percent(plan.count_from(first, Disposition::Remove), defined),
        )
    };
    let bytes_saved_percent = if stats.bytes_before == 0 {
        0.0
    } else {
        round2(100.0 * (1.0 - stats.bytes_after as f64 / stats.bytes_before as f64))
    };
    DebloatReport {
        stats,
        keep_ratio,
        stub_ratio,
        remove_ratio,
        bytes_saved_percent,
        trace_summary: TraceSummary {
            entered: trace.entered.len(),
            call_targets: trace.call_targets.len(),
            table_observed: trace.table_observed.len(),
        },
        validation: verdict,
        tool_version: TOOL_VERSION.to_string(),
        timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
    }
}
