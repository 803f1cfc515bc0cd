//! The `wasm-debloat` command-line tool.
//!
//! Exit codes: 0 on success, 1 on unreadable or invalid input, 2 when the
//! debloated module does not reproduce the workload's behavior, 64 on usage
//! errors.

pub mod doc;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use debloat_core::interp::{check_workload, run_workload, HostConfig, InvocationOutcome, Workload};
use debloat_core::pipeline::{
    debloat_module, validate_behavior, DebloatOutput, Options, PipelineError, ValidationVerdict,
};
use debloat_core::wasm::{decode, section_sizes, validate_module, ExternalKind, Module};
use serde::Serialize;

use doc::WorkloadDocument;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_BEHAVIOR: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "wasm-debloat",
    version,
    about = "Trace-based debloating of WebAssembly modules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Trace a workload, stub or remove unused functions and check the result.
    Debloat {
        #[arg(long)]
        module: PathBuf,
        #[arg(long)]
        workload: PathBuf,
        /// Where to write the debloated module.
        #[arg(long)]
        out: PathBuf,
        /// Where to write the report (stdout if omitted).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Exit with status 2 if the debloated module behaves differently.
        #[arg(long)]
        fail_on_behavior_change: bool,
    },
    /// Run a workload and write the sets of functions it used.
    Trace {
        #[arg(long)]
        module: PathBuf,
        #[arg(long)]
        workload: PathBuf,
        /// Where to write the trace (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a workload on two modules and compare what they do.
    Validate {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        debloated: PathBuf,
        #[arg(long)]
        workload: PathBuf,
    },
    /// Print section sizes and function counts.
    Stats {
        #[arg(long)]
        module: PathBuf,
    },
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    BehaviorChanged,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli.command) {
        Ok(Status::Ok) => EXIT_OK,
        Ok(Status::BehaviorChanged) => EXIT_BEHAVIOR,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}

fn execute(command: Command) -> anyhow::Result<Status> {
    match command {
        Command::Debloat {
            module,
            workload,
            out,
            report,
            fail_on_behavior_change,
        } => cmd_debloat(
            &module,
            &workload,
            &out,
            report.as_deref(),
            fail_on_behavior_change,
        ),
        Command::Trace {
            module,
            workload,
            out,
        } => cmd_trace(&module, &workload, out.as_deref()),
        Command::Validate {
            original,
            debloated,
            workload,
        } => cmd_validate(&original, &debloated, &workload),
        Command::Stats { module } => cmd_stats(&module),
    }
}

fn read_bytes(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_module(path: &Path) -> anyhow::Result<(Vec<u8>, Module)> {
    let bytes = read_bytes(path)?;
    let m = decode(&bytes).with_context(|| format!("{}", path.display()))?;
    Ok((bytes, m))
}

pub fn read_workload(path: &Path) -> anyhow::Result<Workload> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let doc = WorkloadDocument::parse(&text)
        .with_context(|| format!("invalid workload document {}", path.display()))?;
    Ok(doc.to_workload())
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes `value` as pretty JSON to `path`, or to stdout when `path` is `None`.
fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn print_mismatches(v: &ValidationVerdict) {
    if !v.syntactic_ok {
        eprintln!("debloated module failed validation");
    }
    for m in &v.mismatches {
        let at = m
            .invocation
            .map_or_else(String::new, |i| format!("invocation {i}: "));
        eprintln!(
            "{at}{}: original {} but debloated {}",
            m.field, m.original, m.debloated
        );
    }
}

fn cmd_debloat(
    module: &Path,
    workload: &Path,
    out: &Path,
    report: Option<&Path>,
    fail_on_behavior_change: bool,
) -> anyhow::Result<Status> {
    let input = read_bytes(module)?;
    let w = read_workload(workload)?;
    let opts = Options {
        fail_on_behavior_change,
        ..Options::default()
    };
    let (output, status) = match debloat_module(&input, &w, &opts) {
        Ok(output) => (output, Status::Ok),
        Err(PipelineError::ValidationFailed(output)) => (*output, Status::BehaviorChanged),
        Err(e) => bail!("{}: {e}", module.display()),
    };
    let DebloatOutput {
        bytes, report: doc, ..
    } = output;
    write_file(out, &bytes)?;
    emit(&doc, report)?;
    if !doc.validation.ok() {
        print_mismatches(&doc.validation);
    }
    Ok(status)
}

fn cmd_trace(module: &Path, workload: &Path, out: Option<&Path>) -> anyhow::Result<Status> {
    let (_, m) = read_module(module)?;
    let report = validate_module(&m);
    if let Some(e) = report.errors.first() {
        bail!("{}: invalid module: {e}", module.display());
    }
    let w = read_workload(workload)?;
    let (log, trace) = run_workload(&m, &w, &HostConfig::default())?;
    if let Some(InvocationOutcome::LinkError(msg)) = &log.instantiation_failure {
        bail!("{}: module cannot be instantiated: {msg}", module.display());
    }
    emit(&trace, out)?;
    Ok(Status::Ok)
}

fn cmd_validate(original: &Path, debloated: &Path, workload: &Path) -> anyhow::Result<Status> {
    let (original_bytes, m) = read_module(original)?;
    let (debloated_bytes, _) = read_module(debloated)?;
    let w = read_workload(workload)?;
    check_workload(&m, &w).with_context(|| format!("{}", workload.display()))?;
    let verdict = validate_behavior(
        &original_bytes,
        &debloated_bytes,
        &w,
        &HostConfig::default(),
    );
    emit(&verdict, None)?;
    if verdict.ok() {
        Ok(Status::Ok)
    } else {
        print_mismatches(&verdict);
        Ok(Status::BehaviorChanged)
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct StatsDocument {
    total_bytes: usize,
    sections: Vec<SectionEntry>,
    types: usize,
    imported_functions: u32,
    defined_functions: usize,
    exported_functions: usize,
}

#[derive(Serialize)]
struct SectionEntry {
    section: &'static str,
    bytes: usize,
}

fn cmd_stats(module: &Path) -> anyhow::Result<Status> {
    let (bytes, m) = read_module(module)?;
    let sizes = section_sizes(&bytes)?;
    let doc = StatsDocument {
        total_bytes: bytes.len(),
        sections: sizes
            .iter()
            .map(|(id, n)| SectionEntry {
                section: id.name(),
                bytes: *n,
            })
            .collect(),
        types: m.types.len(),
        imported_functions: m.num_imported_functions(),
        defined_functions: m.functions.len(),
        exported_functions: m
            .exports
            .iter()
            .filter(|e| e.kind == ExternalKind::Func)
            .count(),
    };
    debug_assert_eq!(
        doc.sections.iter().map(|s| s.bytes).sum::<usize>() + 8,
        doc.total_bytes
    );
    emit(&doc, None)?;
    Ok(Status::Ok)
}
