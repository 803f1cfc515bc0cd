//! Turns an execution trace into per-function dispositions.
//!
//! [`consolidate`] unions the dynamic observations with the module's static
//! roots; [`close_references`] closes that set over the references that
//! survive rewriting and assigns every function a [`Disposition`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::ExecutionTrace;
use crate::wasm::{visit_body, ExternalKind, Instruction, Module};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeepRoots {
    /// Functions whose bodies must be preserved.
    pub body_keep: BTreeSet<u32>,
    /// Functions whose declarations must survive, possibly with a stub body.
    pub decl_keep: BTreeSet<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Disposition {
    KeepBody,
    Stub,
    Remove,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeepPlan {
    /// Indexed by original function index (imports first).
    pub disposition: Vec<Disposition>,
    /// Original function index to new index; `None` for removed functions.
    pub func_remap: Vec<Option<u32>>,
    pub type_remap: Vec<Option<u32>>,
    /// Always the identity: globals are never removed.
    pub global_remap: Vec<Option<u32>>,
    /// Positions in the import section of dropped function imports.
    pub removed_imports: BTreeSet<u32>,
}

impl KeepPlan {
    /// Number of functions with disposition `d`, counting only those at or
    /// above `first` in the index space.
    pub fn count_from(&self, first: u32, d: Disposition) -> usize {
        self.disposition
            .iter()
            .skip(first as usize)
            .filter(|x| **x == d)
            .count()
    }

    pub fn removed_types(&self) -> usize {
        self.type_remap.iter().filter(|t| t.is_none()).count()
    }

    pub fn functions_with(&self, d: Disposition) -> impl Iterator<Item = u32> + '_ {
        self.disposition
            .iter()
            .enumerate()
            .filter(move |(_, x)| **x == d)
            .map(|(i, _)| i as u32)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("trace mentions function {index}, but the module has only {count} functions")]
    IndexOutOfRange { index: u32, count: u32 },
}

fn direct_calls(body: &[Instruction], out: &mut BTreeSet<u32>) {
    visit_body(body, &mut |i| {
        if let Instruction::Call(f) = i {
            out.insert(*f);
        }
    });
}

fn static_roots(m: &Module) -> impl Iterator<Item = u32> + '_ {
    let exported = m
        .exports
        .iter()
        .filter(|e| e.kind == ExternalKind::Func)
        .map(|e| e.index);
    let in_tables = m.elements.iter().flat_map(|s| s.functions.iter().copied());
    exported.chain(in_tables).chain(m.start)
}

/// Merges the trace's three sets with the module's static references.
pub fn consolidate(t: &ExecutionTrace, m: &Module) -> Result<KeepRoots, TraceError> {
    let count = m.num_functions();
    if let Some(&index) = t.all_functions().iter().find(|f| **f >= count) {
        return Err(TraceError::IndexOutOfRange { index, count });
    }
    let imported = m.num_imported_functions();

    let mut body_keep: BTreeSet<u32> = t.entered.clone();
    body_keep.extend(t.call_targets.iter().filter(|f| **f >= imported));
    body_keep.extend(&t.table_observed);
    body_keep.extend(m.start);

    let mut decl_keep = body_keep.clone();
    decl_keep.extend(static_roots(m));
    let mut called = BTreeSet::new();
    for f in body_keep.iter().filter(|f| **f >= imported) {
        if let Some(def) = m.defined_function(*f) {
            direct_calls(&def.body, &mut called);
        }
    }
    decl_keep.extend(called.into_iter().filter(|f| *f < imported));

    Ok(KeepRoots {
        body_keep,
        decl_keep,
    })
}

fn dense_remap(keep: impl Iterator<Item = bool>) -> Vec<Option<u32>> {
    let mut next = 0;
    keep.map(|k| {
        k.then(|| {
            next += 1;
            next - 1
        })
    })
    .collect()
}

/// Assigns a disposition to every function and builds the index remaps.
///
/// Only bodies that are kept contribute references: a stubbed body is
/// replaced by a trap, so whatever it used to call is no longer reachable.
pub fn close_references(m: &Module, roots: &KeepRoots) -> KeepPlan {
    let imported = m.num_imported_functions();
    let total = m.num_functions();

    let mut referenced: BTreeSet<u32> = roots.decl_keep.union(&roots.body_keep).copied().collect();
    referenced.extend(static_roots(m));
    // Every kept body is known up front and stubs contribute nothing, so a
    // single pass over the kept bodies reaches the fixed point.
    for f in &roots.body_keep {
        if let Some(def) = m.defined_function(*f) {
            direct_calls(&def.body, &mut referenced);
        }
    }

    let disposition: Vec<Disposition> = (0..total)
        .map(|f| {
            if f < imported {
                if referenced.contains(&f) {
                    Disposition::KeepBody
                } else {
                    Disposition::Remove
                }
            } else if roots.body_keep.contains(&f) {
                Disposition::KeepBody
            } else if referenced.contains(&f) {
                Disposition::Stub
            } else {
                Disposition::Remove
            }
        })
        .collect();
    let func_remap = dense_remap(disposition.iter().map(|d| *d != Disposition::Remove));

    let mut removed_imports = BTreeSet::new();
    let mut used_types = BTreeSet::new();
    for (func, (pos, ty)) in m.imported_functions().enumerate() {
        if disposition[func] == Disposition::Remove {
            removed_imports.insert(pos as u32);
        } else {
            used_types.insert(ty);
        }
    }
    for (i, def) in m.functions.iter().enumerate() {
        let f = imported + i as u32;
        match disposition[f as usize] {
            Disposition::Remove => {}
            Disposition::Stub => {
                used_types.insert(def.type_index);
            }
            Disposition::KeepBody => {
                used_types.insert(def.type_index);
                visit_body(&def.body, &mut |instr| {
                    if let Instruction::CallIndirect { type_index } = instr {
                        used_types.insert(*type_index);
                    }
                });
            }
        }
    }
    let type_remap = dense_remap((0..m.types.len() as u32).map(|t| used_types.contains(&t)));
    let global_count = m.num_imported_globals() + m.globals.len() as u32;
    let global_remap = (0..global_count).map(Some).collect();

    KeepPlan {
        disposition,
        func_remap,
        type_remap,
        global_remap,
        removed_imports,
    }
}
