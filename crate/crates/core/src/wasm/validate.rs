use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::*;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    pub location: String,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationError>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ValidationError {
            location: location.into(),
            message: message.into(),
        });
    }
}

fn check_limits(limits: &Limits, bound: u64, what: &str) -> Option<String> {
    if u64::from(limits.min) > bound {
        return Some(format!("{what} minimum size exceeds {bound}"));
    }
    if let Some(max) = limits.max {
        if u64::from(max) > bound {
            return Some(format!("{what} maximum size exceeds {bound}"));
        }
        if max < limits.min {
            return Some(format!("{what} minimum size exceeds maximum"));
        }
    }
    None
}

/// Checks a constant expression: a single constant or `global.get` of an
/// immutable imported global, producing `expected`.
fn check_const_expr(
    expr: &ConstExpr,
    expected: ValType,
    globals: &[GlobalType],
    imported_globals: u32,
) -> Option<String> {
    let [instr] = expr.0.as_slice() else {
        return Some(match expr.0.len() {
            0 => "type mismatch: constant expression is empty".to_owned(),
            _ => "constant expression required".to_owned(),
        });
    };
    let ty = match instr {
        Instruction::I32Const(_) => ValType::I32,
        Instruction::I64Const(_) => ValType::I64,
        Instruction::F32Const(_) => ValType::F32,
        Instruction::F64Const(_) => ValType::F64,
        Instruction::GlobalGet(g) => {
            if *g >= imported_globals {
                return Some(format!("unknown global {g} in constant expression"));
            }
            let g = globals[*g as usize];
            if g.mutable {
                return Some("constant expression required".to_owned());
            }
            g.value_type
        }
        _ => return Some("constant expression required".to_owned()),
    };
    (ty != expected).then(|| format!("type mismatch: expected {expected}, got {ty}"))
}

/// Runs every structural and typing check of the MVP on `m`. Never fails;
/// problems are collected into the report.
pub fn validate_module(m: &Module) -> ValidationReport {
    let mut report = ValidationReport::default();

    for (i, ty) in m.types.iter().enumerate() {
        if ty.results.len() > 1 {
            report.push(format!("type[{i}]"), "invalid result arity");
        }
    }

    for (i, imp) in m.imports.iter().enumerate() {
        let loc = format!("import[{i}] {}", imp.qualified_name());
        match &imp.desc {
            ImportDesc::Func(ty) if *ty as usize >= m.types.len() => {
                report.push(loc, format!("unknown type {ty}"))
            }
            ImportDesc::Table(t) => {
                if let Some(e) = check_limits(&t.limits, u64::from(u32::MAX), "table") {
                    report.push(loc, e);
                }
            }
            ImportDesc::Memory(mem) => {
                if let Some(e) = check_limits(&mem.limits, u64::from(MAX_PAGES), "memory") {
                    report.push(loc, e);
                }
            }
            _ => {}
        }
    }

    for (i, f) in m.functions.iter().enumerate() {
        if f.type_index as usize >= m.types.len() {
            report.push(
                format!("func[{i}]"),
                format!("unknown type {}", f.type_index),
            );
        }
    }

    let tables = m.table_types();
    if tables.len() > 1 {
        report.push("module", "multiple tables");
    }
    for (i, t) in m.tables.iter().enumerate() {
        if let Some(e) = check_limits(&t.limits, u64::from(u32::MAX), "table") {
            report.push(format!("table[{i}]"), e);
        }
    }
    let memories = m.memory_types();
    if memories.len() > 1 {
        report.push("module", "multiple memories");
    }
    for (i, mem) in m.memories.iter().enumerate() {
        if let Some(e) = check_limits(&mem.limits, u64::from(MAX_PAGES), "memory") {
            report.push(format!("memory[{i}]"), e);
        }
    }

    let globals = m.global_types();
    let imported_globals = m.num_imported_globals();
    for (i, g) in m.globals.iter().enumerate() {
        if let Some(e) = check_const_expr(&g.init, g.ty.value_type, &globals, imported_globals) {
            report.push(format!("global[{}]", imported_globals as usize + i), e);
        }
    }

    let num_funcs = m.num_functions();
    let mut names = HashSet::new();
    for (i, e) in m.exports.iter().enumerate() {
        let loc = format!("export[{i}] \"{}\"", e.name);
        if !names.insert(e.name.as_str()) {
            report.push(loc.clone(), "duplicate export name");
        }
        let bound = match e.kind {
            ExternalKind::Func => num_funcs as usize,
            ExternalKind::Table => tables.len(),
            ExternalKind::Memory => memories.len(),
            ExternalKind::Global => globals.len(),
        };
        if e.index as usize >= bound {
            report.push(loc, "export index out of bounds");
        }
    }

    if let Some(start) = m.start {
        match m.func_type(start) {
            None if start >= num_funcs => {
                report.push("start", "start function index out of bounds")
            }
            None => {}
            Some(ty) if !ty.params.is_empty() || !ty.results.is_empty() => {
                report.push("start", "start function must have type [] -> []")
            }
            Some(_) => {}
        }
    }

    for (i, seg) in m.elements.iter().enumerate() {
        let loc = format!("elem[{i}]");
        if seg.table_index as usize >= tables.len() {
            report.push(loc.clone(), format!("unknown table {}", seg.table_index));
        }
        if let Some(e) = check_const_expr(&seg.offset, ValType::I32, &globals, imported_globals) {
            report.push(loc.clone(), e);
        }
        for f in &seg.functions {
            if *f >= num_funcs {
                report.push(loc.clone(), format!("unknown function {f}"));
            }
        }
    }

    for (i, seg) in m.data.iter().enumerate() {
        let loc = format!("data[{i}]");
        if seg.memory_index as usize >= memories.len() {
            report.push(loc.clone(), format!("unknown memory {}", seg.memory_index));
        }
        if let Some(e) = check_const_expr(&seg.offset, ValType::I32, &globals, imported_globals) {
            report.push(loc, e);
        }
    }

    // Bodies are only type-checked against well-formed signatures.
    let ctx = Context {
        module: m,
        globals: &globals,
        has_table: !tables.is_empty(),
        has_memory: !memories.is_empty(),
    };
    let imported = m.num_imported_functions();
    for (i, f) in m.functions.iter().enumerate() {
        let Some(ty) = m.types.get(f.type_index as usize) else {
            continue;
        };
        let mut checker = FuncChecker::new(&ctx, ty, f);
        if let Err(msg) = checker.run(&f.body) {
            report.push(
                format!(
                    "func[{}] instr {}",
                    imported as usize + i,
                    checker.instr_count
                ),
                msg,
            );
        }
    }

    report
}

struct Context<'a> {
    module: &'a Module,
    globals: &'a [GlobalType],
    has_table: bool,
    has_memory: bool,
}

struct Ctrl {
    label_types: Vec<ValType>,
    end_types: Vec<ValType>,
    height: usize,
    unreachable: bool,
}

/// Operand-stack type checker for one function body. `None` on the stack is
/// the unknown type produced after an unconditional branch.
struct FuncChecker<'a> {
    ctx: &'a Context<'a>,
    locals: Vec<ValType>,
    results: Vec<ValType>,
    ops: Vec<Option<ValType>>,
    ctrls: Vec<Ctrl>,
    instr_count: usize,
}

type Check = Result<(), String>;

impl<'a> FuncChecker<'a> {
    fn new(ctx: &'a Context<'a>, ty: &FuncType, f: &FunctionDef) -> Self {
        let mut locals = ty.params.clone();
        locals.extend_from_slice(&f.locals);
        FuncChecker {
            ctx,
            locals,
            results: ty.results.clone(),
            ops: Vec::new(),
            ctrls: Vec::new(),
            instr_count: 0,
        }
    }

    fn run(&mut self, body: &[Instruction]) -> Check {
        let results = self.results.clone();
        self.push_ctrl(results.clone(), results);
        self.check_seq(body)?;
        self.pop_ctrl()?;
        Ok(())
    }

    fn push(&mut self, t: ValType) {
        self.ops.push(Some(t));
    }

    fn pop(&mut self) -> Result<Option<ValType>, String> {
        let frame = self.ctrls.last().expect("function frame");
        if self.ops.len() == frame.height {
            if frame.unreachable {
                return Ok(None);
            }
            return Err("type mismatch: operand stack underflow".to_owned());
        }
        Ok(self.ops.pop().unwrap())
    }

    fn pop_expect(&mut self, expected: ValType) -> Check {
        match self.pop()? {
            Some(actual) if actual != expected => {
                Err(format!("type mismatch: expected {expected}, got {actual}"))
            }
            _ => Ok(()),
        }
    }

    fn pop_all(&mut self, types: &[ValType]) -> Check {
        types.iter().rev().try_for_each(|t| self.pop_expect(*t))
    }

    fn push_ctrl(&mut self, label_types: Vec<ValType>, end_types: Vec<ValType>) {
        self.ctrls.push(Ctrl {
            label_types,
            end_types,
            height: self.ops.len(),
            unreachable: false,
        });
    }

    fn pop_ctrl(&mut self) -> Result<Vec<ValType>, String> {
        let end_types = self.ctrls.last().expect("frame").end_types.clone();
        self.pop_all(&end_types)?;
        let frame = self.ctrls.pop().unwrap();
        if self.ops.len() != frame.height {
            return Err("type mismatch: values remaining on stack at end of block".to_owned());
        }
        Ok(end_types)
    }

    fn set_unreachable(&mut self) {
        let frame = self.ctrls.last_mut().expect("frame");
        self.ops.truncate(frame.height);
        frame.unreachable = true;
    }

    fn label_types(&self, depth: u32) -> Result<Vec<ValType>, String> {
        let n = self.ctrls.len();
        if depth as usize >= n {
            return Err(format!("unknown label {depth}"));
        }
        Ok(self.ctrls[n - 1 - depth as usize].label_types.clone())
    }

    fn local(&self, i: u32) -> Result<ValType, String> {
        self.locals
            .get(i as usize)
            .copied()
            .ok_or_else(|| format!("unknown local {i}"))
    }

    fn global(&self, i: u32) -> Result<GlobalType, String> {
        self.ctx
            .globals
            .get(i as usize)
            .copied()
            .ok_or_else(|| format!("unknown global {i}"))
    }

    fn require_memory(&self) -> Check {
        if self.ctx.has_memory {
            Ok(())
        } else {
            Err("unknown memory 0".to_owned())
        }
    }

    fn check_align(align: u32, natural: u32) -> Check {
        if align > natural {
            Err("alignment must not be larger than natural".to_owned())
        } else {
            Ok(())
        }
    }

    fn check_seq(&mut self, body: &[Instruction]) -> Check {
        body.iter().try_for_each(|i| self.check(i))
    }

    fn block(&mut self, label: Vec<ValType>, results: Vec<ValType>, body: &[Instruction]) -> Check {
        self.push_ctrl(label, results);
        self.check_seq(body)?;
        self.pop_ctrl()?;
        Ok(())
    }

    fn check(&mut self, instr: &Instruction) -> Check {
        use Instruction::*;
        self.instr_count += 1;
        match instr {
            Unreachable => self.set_unreachable(),
            Nop => {}
            Block { ty, body } => {
                self.block(ty.results(), ty.results(), body)?;
                ty.results().into_iter().for_each(|t| self.push(t));
            }
            Loop { ty, body } => {
                self.block(Vec::new(), ty.results(), body)?;
                ty.results().into_iter().for_each(|t| self.push(t));
            }
            If {
                ty,
                then_body,
                else_body,
            } => {
                self.pop_expect(ValType::I32)?;
                self.block(ty.results(), ty.results(), then_body)?;
                self.block(ty.results(), ty.results(), else_body)?;
                ty.results().into_iter().for_each(|t| self.push(t));
            }
            Br(l) => {
                let types = self.label_types(*l)?;
                self.pop_all(&types)?;
                self.set_unreachable();
            }
            BrIf(l) => {
                self.pop_expect(ValType::I32)?;
                let types = self.label_types(*l)?;
                self.pop_all(&types)?;
                types.into_iter().for_each(|t| self.push(t));
            }
            BrTable { targets, default } => {
                self.pop_expect(ValType::I32)?;
                let types = self.label_types(*default)?;
                for t in targets {
                    if self.label_types(*t)? != types {
                        return Err(
                            "type mismatch: br_table targets have inconsistent types".to_owned()
                        );
                    }
                }
                self.pop_all(&types)?;
                self.set_unreachable();
            }
            Return => {
                let results = self.results.clone();
                self.pop_all(&results)?;
                self.set_unreachable();
            }
            Call(f) => {
                let ty = self
                    .ctx
                    .module
                    .func_type(*f)
                    .ok_or_else(|| format!("unknown function {f}"))?
                    .clone();
                self.pop_all(&ty.params)?;
                ty.results.into_iter().for_each(|t| self.push(t));
            }
            CallIndirect { type_index } => {
                if !self.ctx.has_table {
                    return Err("unknown table 0".to_owned());
                }
                let ty = self
                    .ctx
                    .module
                    .types
                    .get(*type_index as usize)
                    .ok_or_else(|| format!("unknown type {type_index}"))?
                    .clone();
                self.pop_expect(ValType::I32)?;
                self.pop_all(&ty.params)?;
                ty.results.into_iter().for_each(|t| self.push(t));
            }
            Drop => {
                self.pop()?;
            }
            Select => {
                self.pop_expect(ValType::I32)?;
                let a = self.pop()?;
                let b = self.pop()?;
                match (a, b) {
                    (Some(x), Some(y)) if x != y => {
                        return Err(format!("type mismatch: select operands {x} and {y}"))
                    }
                    _ => self.ops.push(a.or(b)),
                }
            }
            LocalGet(i) => {
                let t = self.local(*i)?;
                self.push(t);
            }
            LocalSet(i) => {
                let t = self.local(*i)?;
                self.pop_expect(t)?;
            }
            LocalTee(i) => {
                let t = self.local(*i)?;
                self.pop_expect(t)?;
                self.push(t);
            }
            GlobalGet(i) => {
                let g = self.global(*i)?;
                self.push(g.value_type);
            }
            GlobalSet(i) => {
                let g = self.global(*i)?;
                if !g.mutable {
                    return Err(format!("global {i} is immutable"));
                }
                self.pop_expect(g.value_type)?;
            }
            Load(op, arg) => {
                self.require_memory()?;
                Self::check_align(arg.align, op.natural_alignment())?;
                self.pop_expect(ValType::I32)?;
                self.push(op.value_type());
            }
            Store(op, arg) => {
                self.require_memory()?;
                Self::check_align(arg.align, op.natural_alignment())?;
                self.pop_expect(op.value_type())?;
                self.pop_expect(ValType::I32)?;
            }
            MemorySize => {
                self.require_memory()?;
                self.push(ValType::I32);
            }
            MemoryGrow => {
                self.require_memory()?;
                self.pop_expect(ValType::I32)?;
                self.push(ValType::I32);
            }
            I32Const(_) => self.push(ValType::I32),
            I64Const(_) => self.push(ValType::I64),
            F32Const(_) => self.push(ValType::F32),
            F64Const(_) => self.push(ValType::F64),
            Numeric(op) => {
                self.pop_all(op.params())?;
                self.push(op.result());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Instruction::*;
    use ValType::*;

    fn single_function(ty: FuncType, locals: Vec<ValType>, body: Vec<Instruction>) -> Module {
        Module {
            types: vec![ty],
            functions: vec![FunctionDef {
                type_index: 0,
                locals,
                body,
            }],
            ..Module::default()
        }
    }

    fn messages(m: &Module) -> Vec<String> {
        validate_module(m)
            .errors
            .into_iter()
            .map(|e| e.message)
            .collect()
    }

    #[test]
    fn empty_module_is_valid() {
        assert!(validate_module(&Module::default()).ok());
    }

    #[test]
    fn add_function_type_checks() {
        let m = single_function(
            FuncType::new([I32, I32], [I32]),
            vec![],
            vec![LocalGet(0), LocalGet(1), Numeric(NumOp::I32Add)],
        );
        assert!(validate_module(&m).ok(), "{:?}", validate_module(&m));
    }

    #[test]
    fn export_out_of_bounds() {
        let mut m = single_function(FuncType::default(), vec![], vec![]);
        m.exports.push(Export {
            name: "f".into(),
            kind: ExternalKind::Func,
            index: 5,
        });
        assert_eq!(messages(&m), ["export index out of bounds"]);
    }

    #[test]
    fn duplicate_export_names() {
        let mut m = single_function(FuncType::default(), vec![], vec![]);
        for _ in 0..2 {
            m.exports.push(Export {
                name: "f".into(),
                kind: ExternalKind::Func,
                index: 0,
            });
        }
        assert_eq!(messages(&m), ["duplicate export name"]);
    }

    #[test]
    fn stack_discipline_errors() {
        let wrong_type = single_function(
            FuncType::new([I32, I64], [I32]),
            vec![],
            vec![LocalGet(0), LocalGet(1), Numeric(NumOp::I32Add)],
        );
        assert!(messages(&wrong_type)[0].contains("type mismatch"));

        let leftover = single_function(FuncType::default(), vec![], vec![I32Const(1)]);
        assert!(messages(&leftover)[0].contains("remaining"));

        let underflow = single_function(FuncType::new([], [I32]), vec![], vec![]);
        assert!(messages(&underflow)[0].contains("underflow"));

        let if_without_else = single_function(
            FuncType::new([], [I32]),
            vec![],
            vec![
                I32Const(1),
                If {
                    ty: BlockType::Value(I32),
                    then_body: vec![I32Const(2)],
                    else_body: vec![],
                },
            ],
        );
        assert!(!validate_module(&if_without_else).ok());
    }

    #[test]
    fn unreachable_is_stack_polymorphic() {
        for results in [vec![], vec![I32], vec![F64]] {
            let m = single_function(FuncType::new([I64], results), vec![], vec![Unreachable]);
            assert!(validate_module(&m).ok());
        }
        let m = single_function(
            FuncType::new([], [I32]),
            vec![],
            vec![Unreachable, Numeric(NumOp::I32Add), Select],
        );
        assert!(validate_module(&m).ok());
    }

    #[test]
    fn branches_and_labels() {
        let m = single_function(
            FuncType::new([I32], [I32]),
            vec![],
            vec![Block {
                ty: BlockType::Value(I32),
                body: vec![
                    I32Const(7),
                    LocalGet(0),
                    BrIf(0),
                    Drop,
                    Loop {
                        ty: BlockType::Empty,
                        body: vec![LocalGet(0), BrIf(0)],
                    },
                    I32Const(1),
                    LocalGet(0),
                    BrTable {
                        targets: vec![0, 0],
                        default: 0,
                    },
                ],
            }],
        );
        assert!(validate_module(&m).ok(), "{:?}", validate_module(&m));

        let bad_label = single_function(FuncType::default(), vec![], vec![Br(1)]);
        assert_eq!(messages(&bad_label), ["unknown label 1"]);
    }

    #[test]
    fn memory_and_globals_need_declarations() {
        let m = single_function(
            FuncType::new([], [I32]),
            vec![],
            vec![
                I32Const(0),
                Load(
                    LoadOp::I32Load,
                    MemArg {
                        align: 2,
                        offset: 0,
                    },
                ),
            ],
        );
        assert_eq!(messages(&m), ["unknown memory 0"]);

        let mut m = m;
        m.memories.push(MemType {
            limits: Limits { min: 1, max: None },
        });
        assert!(validate_module(&m).ok());
        if let Load(_, arg) = &mut m.functions[0].body[1] {
            arg.align = 3;
        }
        assert_eq!(messages(&m), ["alignment must not be larger than natural"]);

        let mut g = single_function(FuncType::default(), vec![], vec![I32Const(1), GlobalSet(0)]);
        g.globals.push(GlobalDef {
            ty: GlobalType {
                value_type: I32,
                mutable: false,
            },
            init: ConstExpr::i32(0),
        });
        assert_eq!(messages(&g), ["global 0 is immutable"]);
    }

    #[test]
    fn module_level_limits() {
        let m = Module {
            memories: vec![
                MemType {
                    limits: Limits { min: 1, max: None }
                };
                2
            ],
            ..Module::default()
        };
        assert_eq!(messages(&m), ["multiple memories"]);

        let mut m = Module::default();
        m.memories.push(MemType {
            limits: Limits {
                min: 2,
                max: Some(1),
            },
        });
        assert!(messages(&m)[0].contains("exceeds maximum"));

        let mut m = single_function(FuncType::new([I32], []), vec![], vec![]);
        m.start = Some(0);
        assert_eq!(messages(&m), ["start function must have type [] -> []"]);
    }

    #[test]
    fn const_expressions() {
        let mut m = Module::default();
        m.globals.push(GlobalDef {
            ty: GlobalType {
                value_type: I64,
                mutable: true,
            },
            init: ConstExpr::i32(0),
        });
        assert!(messages(&m)[0].contains("type mismatch"));
        m.globals[0].init = ConstExpr(vec![I64Const(1), I64Const(2)]);
        assert_eq!(messages(&m), ["constant expression required"]);
        m.globals[0].init = ConstExpr(vec![I64Const(1)]);
        assert!(validate_module(&m).ok());
    }
}
