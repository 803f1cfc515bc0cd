//! Applies a [`KeepPlan`] to a module: stubs, removals and index rewriting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Disposition, KeepPlan};
use crate::wasm::names::{self, NameSection};
use crate::wasm::{
    decode, section_sizes, visit_body_mut, CustomSection, DecodeError, ExternalKind, FunctionDef,
    ImportDesc, Instruction, Module, SectionId,
};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ShrinkStats {
    /// Defined functions whose bodies were kept.
    pub functions_kept_body: usize,
    pub functions_stubbed: usize,
    /// Defined functions deleted outright.
    pub functions_removed: usize,
    pub imports_removed: usize,
    pub types_removed: usize,
    pub bytes_before: usize,
    pub bytes_after: usize,
    pub code_bytes_before: usize,
    pub code_bytes_after: usize,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("plan does not match module: {0}")]
pub struct PlanMismatch(pub String);

/// Replaces a body with a single `unreachable`, keeping the signature.
pub fn stub_body(f: &FunctionDef) -> FunctionDef {
    FunctionDef {
        type_index: f.type_index,
        locals: Vec::new(),
        body: vec![Instruction::Unreachable],
    }
}

fn remap(table: &[Option<u32>], index: u32, what: &str) -> Result<u32, PlanMismatch> {
    match table.get(index as usize) {
        Some(Some(new)) => Ok(*new),
        Some(None) => Err(PlanMismatch(format!("reference to removed {what} {index}"))),
        None => Err(PlanMismatch(format!("{what} {index} is outside the plan"))),
    }
}

fn check_lengths(m: &Module, plan: &KeepPlan) -> Result<(), PlanMismatch> {
    let globals = (m.num_imported_globals() as usize) + m.globals.len();
    let checks = [
        (
            "functions",
            plan.disposition.len(),
            m.num_functions() as usize,
        ),
        (
            "function remap entries",
            plan.func_remap.len(),
            m.num_functions() as usize,
        ),
        ("type remap entries", plan.type_remap.len(), m.types.len()),
        ("global remap entries", plan.global_remap.len(), globals),
    ];
    for (what, got, want) in checks {
        if got != want {
            return Err(PlanMismatch(format!(
                "{got} {what} in plan, module has {want}"
            )));
        }
    }
    for &pos in &plan.removed_imports {
        match m.imports.get(pos as usize) {
            Some(imp) if matches!(imp.desc, ImportDesc::Func(_)) => {}
            _ => {
                return Err(PlanMismatch(format!(
                    "import {pos} is not a function import"
                )))
            }
        }
    }
    for (f, d) in plan.disposition.iter().enumerate() {
        if (*d == Disposition::Remove) != plan.func_remap[f].is_none() {
            return Err(PlanMismatch(format!(
                "function {f} disposition disagrees with its remap entry"
            )));
        }
    }
    Ok(())
}

fn rewrite_body(body: &mut [Instruction], plan: &KeepPlan) -> Result<(), PlanMismatch> {
    let mut result = Ok(());
    visit_body_mut(body, &mut |instr| {
        let r = match instr {
            Instruction::Call(f) => remap(&plan.func_remap, *f, "function").map(|n| *f = n),
            Instruction::CallIndirect { type_index } => {
                remap(&plan.type_remap, *type_index, "type").map(|n| *type_index = n)
            }
            Instruction::GlobalGet(g) | Instruction::GlobalSet(g) => {
                remap(&plan.global_remap, *g, "global").map(|n| *g = n)
            }
            _ => Ok(()),
        };
        if result.is_ok() {
            result = r;
        }
    });
    result
}

fn remap_names(data: &[u8], m: &Module, plan: &KeepPlan) -> Option<Vec<u8>> {
    let names = NameSection::parse(data)?;
    let keep = |f: u32| plan.func_remap.get(f as usize).copied().flatten();
    let functions = names
        .functions
        .iter()
        .filter_map(|(f, n)| Some((keep(*f)?, n.clone())))
        .collect();
    let locals = names
        .locals
        .iter()
        .filter_map(|(f, map)| {
            let new = keep(*f)?;
            let map = match plan.disposition[*f as usize] {
                // Stubs keep their parameters but lose every declared local.
                Disposition::Stub => {
                    let params = m.func_type(*f)?.params.len() as u32;
                    map.iter().filter(|(l, _)| *l < params).cloned().collect()
                }
                _ => map.clone(),
            };
            (!map.is_empty()).then_some((new, map))
        })
        .collect();
    Some(
        NameSection {
            module: names.module,
            functions,
            locals,
        }
        .encode(),
    )
}

/// Rewrites `m` according to `plan`. All custom sections except `name` are
/// dropped; the name section is remapped to the new function indices.
pub fn apply_plan(m: &Module, plan: &KeepPlan) -> Result<Module, PlanMismatch> {
    check_lengths(m, plan)?;
    let imported = m.num_imported_functions();

    let types = m
        .types
        .iter()
        .zip(&plan.type_remap)
        .filter(|(_, r)| r.is_some())
        .map(|(t, _)| t.clone())
        .collect();

    let mut imports = Vec::new();
    for (pos, imp) in m.imports.iter().enumerate() {
        if plan.removed_imports.contains(&(pos as u32)) {
            continue;
        }
        let mut imp = imp.clone();
        if let ImportDesc::Func(ty) = &mut imp.desc {
            *ty = remap(&plan.type_remap, *ty, "type")?;
        }
        imports.push(imp);
    }
    let kept_imports = imports
        .iter()
        .filter(|i| matches!(i.desc, ImportDesc::Func(_)))
        .count() as u32;
    let expected = plan.func_remap[..imported as usize]
        .iter()
        .filter(|r| r.is_some())
        .count() as u32;
    if kept_imports != expected {
        return Err(PlanMismatch(
            "removed imports disagree with function dispositions".into(),
        ));
    }

    let mut functions = Vec::new();
    for (i, def) in m.functions.iter().enumerate() {
        let mut def = match plan.disposition[imported as usize + i] {
            Disposition::Remove => continue,
            Disposition::Stub => stub_body(def),
            Disposition::KeepBody => {
                let mut def = def.clone();
                rewrite_body(&mut def.body, plan)?;
                def
            }
        };
        def.type_index = remap(&plan.type_remap, def.type_index, "type")?;
        functions.push(def);
    }

    let mut globals = m.globals.clone();
    for g in &mut globals {
        rewrite_body(&mut g.init.0, plan)?;
    }

    let mut exports = m.exports.clone();
    for e in &mut exports {
        match e.kind {
            ExternalKind::Func => e.index = remap(&plan.func_remap, e.index, "function")?,
            ExternalKind::Global => e.index = remap(&plan.global_remap, e.index, "global")?,
            ExternalKind::Table | ExternalKind::Memory => {}
        }
    }

    let mut elements = m.elements.clone();
    for seg in &mut elements {
        rewrite_body(&mut seg.offset.0, plan)?;
        for f in &mut seg.functions {
            *f = remap(&plan.func_remap, *f, "function")?;
        }
    }
    let mut data = m.data.clone();
    for seg in &mut data {
        rewrite_body(&mut seg.offset.0, plan)?;
    }

    let start = m
        .start
        .map(|s| remap(&plan.func_remap, s, "function"))
        .transpose()?;

    let custom_sections = m
        .custom_sections
        .iter()
        .filter(|c| c.name == names::SECTION_NAME)
        .filter_map(|c| {
            Some(CustomSection {
                name: c.name.clone(),
                data: remap_names(&c.data, m, plan)?,
            })
        })
        .collect();

    Ok(Module {
        types,
        imports,
        functions,
        tables: m.tables.clone(),
        memories: m.memories.clone(),
        globals,
        exports,
        start,
        elements,
        data,
        custom_sections,
    })
}

/// Summarizes a shrink: function counts from the plan, sizes from the bytes.
pub fn shrink_stats(
    before: &[u8],
    after: &[u8],
    plan: &KeepPlan,
) -> Result<ShrinkStats, DecodeError> {
    let m = decode(before)?;
    let sizes_before = section_sizes(before)?;
    let sizes_after = section_sizes(after)?;
    let first = m.num_imported_functions();
    let code = |s: &crate::wasm::SectionSizes| s.get(&SectionId::Code).copied().unwrap_or(0);
    Ok(ShrinkStats {
        functions_kept_body: plan.count_from(first, Disposition::KeepBody),
        functions_stubbed: plan.count_from(first, Disposition::Stub),
        functions_removed: plan.count_from(first, Disposition::Remove),
        imports_removed: plan.removed_imports.len(),
        types_removed: plan.removed_types(),
        bytes_before: before.len(),
        bytes_after: after.len(),
        code_bytes_before: code(&sizes_before),
        code_bytes_after: code(&sizes_after),
    })
}
