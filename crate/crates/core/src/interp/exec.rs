use std::collections::HashMap;
use std::rc::Rc;

use crate::wasm::{
    validate_module, ConstExpr, ExternalKind, FuncType, ImportDesc, Instruction, LoadOp, Module,
    StoreOp, ValType, PAGE_SIZE,
};

use super::compile::{compile_body, Op};
use super::numeric;
use super::*;

enum Func {
    Host {
        import: String,
        ty: FuncType,
        behavior: HostBehavior,
    },
    Wasm {
        ty: FuncType,
        locals: Vec<ValType>,
        code: Vec<Op>,
    },
}

impl Func {
    fn ty(&self) -> &FuncType {
        match self {
            Func::Host { ty, .. } | Func::Wasm { ty, .. } => ty,
        }
    }
}

#[derive(Clone, Copy)]
struct Label {
    target: u32,
    arity: u32,
    height: usize,
}

#[derive(Clone, Copy)]
struct Frame {
    func: u32,
    pc: usize,
    locals_base: usize,
    label_base: usize,
    stack_base: usize,
}

/// Why instantiation did not produce an instance, plus whatever the start
/// function managed to do before failing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstantiationFailure {
    /// `LinkError` or `Trap`.
    pub outcome: InvocationOutcome,
    pub trace: ExecutionTrace,
    pub host_calls: Vec<HostCall>,
}

/// A live module instance. Memory, table and globals persist across
/// invocations; the execution trace accumulates over the instance's lifetime.
pub struct Instance {
    funcs: Rc<[Func]>,
    types: Vec<FuncType>,
    memory: Option<Vec<u8>>,
    memory_max_pages: u32,
    table: Option<Vec<Option<u32>>>,
    globals: Vec<Value>,
    exports: HashMap<String, u32>,
    trace: ExecutionTrace,
    host_calls: Vec<HostCall>,
}

fn eval_const(expr: &ConstExpr, globals: &[Value]) -> Value {
    match expr.0.as_slice() {
        [Instruction::I32Const(v)] => Value::I32(*v),
        [Instruction::I64Const(v)] => Value::I64(*v),
        [Instruction::F32Const(b)] => Value::F32(f32::from_bits(*b)),
        [Instruction::F64Const(b)] => Value::F64(f64::from_bits(*b)),
        [Instruction::GlobalGet(g)] => globals[*g as usize],
        _ => unreachable!("constant expressions are validated"),
    }
}

fn offset_of(expr: &ConstExpr, globals: &[Value]) -> u64 {
    match eval_const(expr, globals) {
        Value::I32(v) => u64::from(v as u32),
        _ => unreachable!("segment offsets are i32"),
    }
}

impl Instance {
    /// Links `m` against `host`, initializes state and runs the start
    /// function with `fuel` instructions of budget.
    // The failure carries the partial trace; instantiation is not a hot path.
    #[allow(clippy::result_large_err)]
    pub fn instantiate(
        m: &Module,
        host: &HostConfig,
        fuel: u64,
    ) -> Result<Instance, InstantiationFailure> {
        let link_error = |msg: String| InstantiationFailure {
            outcome: InvocationOutcome::LinkError(msg),
            trace: ExecutionTrace::default(),
            host_calls: Vec::new(),
        };

        let report = validate_module(m);
        if let Some(e) = report.errors.first() {
            return Err(link_error(format!("invalid module: {e}")));
        }

        let mut funcs = Vec::with_capacity(m.num_functions() as usize);
        for imp in &m.imports {
            let name = imp.qualified_name();
            let ImportDesc::Func(ty) = imp.desc else {
                return Err(link_error(format!("unknown import {name}")));
            };
            let ty = &m.types[ty as usize];
            let provided = host
                .find(&imp.module, &imp.name)
                .ok_or_else(|| link_error(format!("unknown import {name}")))?;
            if &provided.ty != ty {
                return Err(link_error(format!(
                    "incompatible import type for {name}: expected {}, host provides {}",
                    ty, provided.ty
                )));
            }
            funcs.push(Func::Host {
                import: name,
                ty: ty.clone(),
                behavior: provided.behavior,
            });
        }
        for f in &m.functions {
            funcs.push(Func::Wasm {
                ty: m.types[f.type_index as usize].clone(),
                locals: f.locals.clone(),
                code: compile_body(&f.body),
            });
        }

        let mut globals = Vec::with_capacity(m.globals.len());
        for g in &m.globals {
            let v = eval_const(&g.init, &globals);
            globals.push(v);
        }

        let (memory, memory_max_pages) = match m.memories.first() {
            Some(mem) => {
                if mem.limits.min > host.max_memory_pages {
                    return Err(link_error(format!(
                        "memory of {} pages exceeds the host limit of {}",
                        mem.limits.min, host.max_memory_pages
                    )));
                }
                let max = mem
                    .limits
                    .max
                    .unwrap_or(u32::MAX)
                    .min(host.max_memory_pages);
                (Some(vec![0u8; mem.limits.min as usize * PAGE_SIZE]), max)
            }
            None => (None, 0),
        };
        let table = m.tables.first().map(|t| vec![None; t.limits.min as usize]);

        let exports = m
            .exports
            .iter()
            .filter(|e| e.kind == ExternalKind::Func)
            .map(|e| (e.name.clone(), e.index))
            .collect();

        let mut instance = Instance {
            funcs: funcs.into(),
            types: m.types.clone(),
            memory,
            memory_max_pages,
            table,
            globals,
            exports,
            trace: ExecutionTrace::default(),
            host_calls: Vec::new(),
        };

        // All segments are bounds-checked before any of them is written.
        let trap = |kind| InstantiationFailure {
            outcome: InvocationOutcome::Trap(Trap {
                kind,
                function: None,
            }),
            trace: ExecutionTrace::default(),
            host_calls: Vec::new(),
        };
        let table_len = instance.table.as_ref().map_or(0, Vec::len) as u64;
        let mut elem_offsets = Vec::new();
        for seg in &m.elements {
            let at = offset_of(&seg.offset, &instance.globals);
            if at + seg.functions.len() as u64 > table_len {
                return Err(trap(TrapKind::OutOfBoundsTable));
            }
            elem_offsets.push(at as usize);
        }
        let mem_len = instance.memory.as_ref().map_or(0, Vec::len) as u64;
        let mut data_offsets = Vec::new();
        for seg in &m.data {
            let at = offset_of(&seg.offset, &instance.globals);
            if at + seg.bytes.len() as u64 > mem_len {
                return Err(trap(TrapKind::OutOfBoundsMemory));
            }
            data_offsets.push(at as usize);
        }
        if let Some(table) = &mut instance.table {
            for (seg, at) in m.elements.iter().zip(elem_offsets) {
                for (slot, f) in table[at..].iter_mut().zip(&seg.functions) {
                    *slot = Some(*f);
                }
            }
        }
        if let Some(mem) = &mut instance.memory {
            for (seg, at) in m.data.iter().zip(data_offsets) {
                mem[at..at + seg.bytes.len()].copy_from_slice(&seg.bytes);
            }
        }

        if let Some(start) = m.start {
            if let Err(t) = instance.call(start, Vec::new(), fuel) {
                return Err(InstantiationFailure {
                    outcome: InvocationOutcome::Trap(t),
                    trace: instance.trace,
                    host_calls: instance.host_calls,
                });
            }
        }
        Ok(instance)
    }

    /// Calls an exported function.
    pub fn invoke(
        &mut self,
        export: &str,
        args: &[Value],
        fuel: u64,
    ) -> Result<InvocationOutcome, InvokeError> {
        let func = *self
            .exports
            .get(export)
            .ok_or_else(|| InvokeError::UnknownExport(export.to_owned()))?;
        let ty = self.funcs[func as usize].ty();
        let got: Vec<ValType> = args.iter().map(Value::ty).collect();
        if got != ty.params {
            return Err(InvokeError::SignatureMismatch {
                export: export.to_owned(),
                expected: ty.clone(),
                got,
            });
        }
        Ok(match self.call(func, args.to_vec(), fuel) {
            Ok(results) => InvocationOutcome::Results(results),
            Err(trap) => InvocationOutcome::Trap(trap),
        })
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    pub fn into_trace(self) -> ExecutionTrace {
        self.trace
    }

    /// Host calls made since the last call to this method.
    pub fn take_host_calls(&mut self) -> Vec<HostCall> {
        std::mem::take(&mut self.host_calls)
    }

    pub fn memory(&self) -> Option<&[u8]> {
        self.memory.as_deref()
    }

    pub fn globals(&self) -> &[Value] {
        &self.globals
    }

    fn call_host(&mut self, func: u32, args: Vec<Value>) -> Result<Vec<Value>, Trap> {
        let Func::Host {
            import, behavior, ..
        } = &self.funcs[func as usize]
        else {
            unreachable!("host function expected")
        };
        self.host_calls.push(HostCall {
            import: import.clone(),
            args,
        });
        match behavior {
            HostBehavior::Record => Ok(Vec::new()),
            HostBehavior::Abort => Err(Trap {
                kind: TrapKind::Unreachable,
                function: Some(func),
            }),
        }
    }

    /// Runs `func` to completion on a fresh machine stack.
    fn call(&mut self, func: u32, args: Vec<Value>, fuel: u64) -> Result<Vec<Value>, Trap> {
        if matches!(self.funcs[func as usize], Func::Host { .. }) {
            return self.call_host(func, args);
        }
        let mut m = Machine {
            stack: args,
            locals: Vec::new(),
            labels: Vec::new(),
            frames: Vec::new(),
            fuel,
        };
        m.enter(self, func, None)?;
        m.run(self)
    }
}

struct Machine {
    stack: Vec<Value>,
    locals: Vec<Value>,
    labels: Vec<Label>,
    frames: Vec<Frame>,
    fuel: u64,
}

impl Machine {
    fn trap(&self, kind: TrapKind) -> Trap {
        Trap {
            kind,
            function: self.frames.last().map(|f| f.func),
        }
    }

    fn pop(&mut self) -> Value {
        self.stack
            .pop()
            .expect("operand stack underflow in validated code")
    }

    fn pop_i32(&mut self) -> i32 {
        match self.pop() {
            Value::I32(v) => v,
            v => unreachable!("expected i32, found {v}"),
        }
    }

    /// Pushes a frame for defined function `func`, taking its arguments from
    /// the operand stack. `caller` is `None` for the outermost call.
    fn enter(&mut self, inst: &mut Instance, func: u32, caller: Option<u32>) -> Result<(), Trap> {
        let Func::Wasm { ty, locals, code } = &inst.funcs[func as usize] else {
            unreachable!("defined function expected")
        };
        let n_params = ty.params.len();
        if self.frames.len() >= MAX_CALL_DEPTH
            || self.stack.len() + self.locals.len() + locals.len() > MAX_STACK_SLOTS
        {
            return Err(self.trap(TrapKind::StackExhausted));
        }
        inst.trace.entered.insert(func);
        if caller.is_some() {
            inst.trace.call_targets.insert(func);
        }
        let locals_base = self.locals.len();
        let args_at = self.stack.len() - n_params;
        self.locals.extend(self.stack.drain(args_at..));
        self.locals
            .extend(locals.iter().map(|t| Value::default_for(*t)));
        let label_base = self.labels.len();
        self.labels.push(Label {
            target: (code.len() - 1) as u32,
            arity: ty.results.len() as u32,
            height: self.stack.len(),
        });
        self.frames.push(Frame {
            func,
            pc: 0,
            locals_base,
            label_base,
            stack_base: self.stack.len(),
        });
        Ok(())
    }

    fn invoke_target(&mut self, inst: &mut Instance, func: u32, caller: u32) -> Result<(), Trap> {
        match &inst.funcs[func as usize] {
            Func::Host { ty, .. } => {
                let n = ty.params.len();
                let at = self.stack.len() - n;
                let args: Vec<Value> = self.stack.drain(at..).collect();
                inst.trace.call_targets.insert(func);
                let results = inst.call_host(func, args)?;
                self.stack.extend(results);
                Ok(())
            }
            Func::Wasm { .. } => self.enter(inst, func, Some(caller)),
        }
    }

    fn branch(&mut self, frame: &mut Frame, depth: u32) {
        let idx = self.labels.len() - 1 - depth as usize;
        let label = self.labels[idx];
        let keep_from = self.stack.len() - label.arity as usize;
        self.stack.drain(label.height..keep_from);
        self.labels.truncate(idx);
        frame.pc = label.target as usize;
    }

    fn effective_address(
        &self,
        inst: &Instance,
        addr: i32,
        offset: u32,
        width: u32,
    ) -> Result<usize, Trap> {
        let ea = u64::from(addr as u32) + u64::from(offset);
        let mem_len = inst.memory.as_ref().map_or(0, Vec::len) as u64;
        if ea + u64::from(width) > mem_len {
            return Err(self.trap(TrapKind::OutOfBoundsMemory));
        }
        Ok(ea as usize)
    }

    fn load(&mut self, inst: &Instance, op: LoadOp, offset: u32) -> Result<(), Trap> {
        let addr = self.pop_i32();
        let at = self.effective_address(inst, addr, offset, op.width())?;
        let mem = inst.memory.as_ref().expect("validated memory access");
        let mut raw = [0u8; 8];
        raw[..op.width() as usize].copy_from_slice(&mem[at..at + op.width() as usize]);
        let u = u64::from_le_bytes(raw);
        use LoadOp::*;
        let v = match op {
            I32Load => Value::I32(u as u32 as i32),
            I64Load => Value::I64(u as i64),
            F32Load => Value::F32(f32::from_bits(u as u32)),
            F64Load => Value::F64(f64::from_bits(u)),
            I32Load8S => Value::I32(i32::from(u as u8 as i8)),
            I32Load8U => Value::I32(i32::from(u as u8)),
            I32Load16S => Value::I32(i32::from(u as u16 as i16)),
            I32Load16U => Value::I32(i32::from(u as u16)),
            I64Load8S => Value::I64(i64::from(u as u8 as i8)),
            I64Load8U => Value::I64(i64::from(u as u8)),
            I64Load16S => Value::I64(i64::from(u as u16 as i16)),
            I64Load16U => Value::I64(i64::from(u as u16)),
            I64Load32S => Value::I64(i64::from(u as u32 as i32)),
            I64Load32U => Value::I64(i64::from(u as u32)),
        };
        self.stack.push(v);
        Ok(())
    }

    fn store(&mut self, inst: &mut Instance, op: StoreOp, offset: u32) -> Result<(), Trap> {
        let value = self.pop();
        let addr = self.pop_i32();
        let at = self.effective_address(inst, addr, offset, op.width())?;
        let bits = match value {
            Value::I32(v) => u64::from(v as u32),
            Value::I64(v) => v as u64,
            Value::F32(v) => u64::from(v.to_bits()),
            Value::F64(v) => v.to_bits(),
        };
        let width = op.width() as usize;
        let mem = inst.memory.as_mut().expect("validated memory access");
        mem[at..at + width].copy_from_slice(&bits.to_le_bytes()[..width]);
        Ok(())
    }

    fn memory_grow(&mut self, inst: &mut Instance) {
        let delta = self.pop_i32() as u32;
        let mem = inst.memory.as_mut().expect("validated memory access");
        let old = (mem.len() / PAGE_SIZE) as u32;
        let new = u64::from(old) + u64::from(delta);
        if new > u64::from(inst.memory_max_pages) {
            self.stack.push(Value::I32(-1));
        } else {
            mem.resize(new as usize * PAGE_SIZE, 0);
            self.stack.push(Value::I32(old as i32));
        }
    }

    fn run(&mut self, inst: &mut Instance) -> Result<Vec<Value>, Trap> {
        let funcs = Rc::clone(&inst.funcs);
        let mut frame = *self.frames.last().expect("entered frame");
        loop {
            let Func::Wasm { code, .. } = &funcs[frame.func as usize] else {
                unreachable!()
            };
            let op = &code[frame.pc];
            if self.fuel == 0 {
                return Err(self.trap(TrapKind::FuelExhausted));
            }
            self.fuel -= 1;
            frame.pc += 1;
            match op {
                Op::Unreachable => return Err(self.trap(TrapKind::Unreachable)),
                Op::Nop => {}
                Op::Block { arity, end } => self.labels.push(Label {
                    target: *end,
                    arity: *arity,
                    height: self.stack.len(),
                }),
                Op::Loop => self.labels.push(Label {
                    target: (frame.pc - 1) as u32,
                    arity: 0,
                    height: self.stack.len(),
                }),
                Op::If {
                    arity,
                    else_pc,
                    end,
                } => {
                    let (arity, else_pc, end) = (*arity, *else_pc, *end);
                    let cond = self.pop_i32();
                    self.labels.push(Label {
                        target: end,
                        arity,
                        height: self.stack.len(),
                    });
                    if cond == 0 {
                        frame.pc = else_pc as usize;
                    }
                }
                Op::Else { end_op } => frame.pc = *end_op as usize,
                Op::End => {
                    self.labels.pop();
                }
                Op::Br(depth) => {
                    let depth = *depth;
                    self.branch(&mut frame, depth);
                }
                Op::BrIf(depth) => {
                    let depth = *depth;
                    if self.pop_i32() != 0 {
                        self.branch(&mut frame, depth);
                    }
                }
                Op::BrTable(targets, default) => {
                    let i = self.pop_i32() as u32 as usize;
                    let depth = targets.get(i).copied().unwrap_or(*default);
                    self.branch(&mut frame, depth);
                }
                Op::Return => {
                    let Func::Wasm { ty, .. } = &funcs[frame.func as usize] else {
                        unreachable!()
                    };
                    let arity = ty.results.len();
                    let keep_from = self.stack.len() - arity;
                    self.stack.drain(frame.stack_base..keep_from);
                    self.labels.truncate(frame.label_base);
                    self.locals.truncate(frame.locals_base);
                    self.frames.pop();
                    match self.frames.last() {
                        Some(caller) => frame = *caller,
                        None => return Ok(std::mem::take(&mut self.stack)),
                    }
                }
                Op::Call(f) => {
                    let f = *f;
                    *self.frames.last_mut().unwrap() = frame;
                    self.invoke_target(inst, f, frame.func)?;
                    frame = *self.frames.last().unwrap();
                }
                Op::CallIndirect(type_index) => {
                    let type_index = *type_index;
                    let i = self.pop_i32() as u32 as usize;
                    let table = inst.table.as_ref().expect("validated table access");
                    let f = match table.get(i) {
                        None => return Err(self.trap(TrapKind::OutOfBoundsTable)),
                        Some(None) => return Err(self.trap(TrapKind::UndefinedTableElement)),
                        Some(Some(f)) => *f,
                    };
                    inst.trace.table_observed.insert(f);
                    if inst.funcs[f as usize].ty() != &inst.types[type_index as usize] {
                        return Err(self.trap(TrapKind::IndirectCallTypeMismatch));
                    }
                    *self.frames.last_mut().unwrap() = frame;
                    self.invoke_target(inst, f, frame.func)?;
                    frame = *self.frames.last().unwrap();
                }
                Op::Drop => {
                    self.pop();
                }
                Op::Select => {
                    let cond = self.pop_i32();
                    let b = self.pop();
                    let a = self.pop();
                    self.stack.push(if cond != 0 { a } else { b });
                }
                Op::LocalGet(i) => {
                    let v = self.locals[frame.locals_base + *i as usize];
                    self.stack.push(v);
                }
                Op::LocalSet(i) => {
                    let i = *i;
                    let v = self.pop();
                    self.locals[frame.locals_base + i as usize] = v;
                }
                Op::LocalTee(i) => {
                    let v = *self.stack.last().expect("validated");
                    self.locals[frame.locals_base + *i as usize] = v;
                }
                Op::GlobalGet(i) => self.stack.push(inst.globals[*i as usize]),
                Op::GlobalSet(i) => {
                    let i = *i;
                    let v = self.pop();
                    inst.globals[i as usize] = v;
                }
                Op::Load(op, offset) => {
                    let (op, offset) = (*op, *offset);
                    self.load(inst, op, offset)?;
                }
                Op::Store(op, offset) => {
                    let (op, offset) = (*op, *offset);
                    self.store(inst, op, offset)?;
                }
                Op::MemorySize => {
                    let len = inst.memory.as_ref().map_or(0, Vec::len);
                    self.stack.push(Value::I32((len / PAGE_SIZE) as i32));
                }
                Op::MemoryGrow => self.memory_grow(inst),
                Op::Const(v) => self.stack.push(*v),
                Op::Num(op) => {
                    let op = *op;
                    let n = op.params().len();
                    let at = self.stack.len() - n;
                    let result = numeric::eval(op, &self.stack[at..]).map_err(|k| self.trap(k))?;
                    self.stack.truncate(at);
                    self.stack.push(result);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wasm::{
        BlockType, ElementSegment, Export, FunctionDef, Import, Limits, MemArg, MemType, NumOp,
        TableType,
    };
    use Instruction::*;
    use ValType::*;

    fn export(name: &str, index: u32) -> Export {
        Export {
            name: name.into(),
            kind: ExternalKind::Func,
            index,
        }
    }

    fn func(type_index: u32, body: Vec<Instruction>) -> FunctionDef {
        FunctionDef {
            type_index,
            locals: vec![],
            body,
        }
    }

    fn add_module() -> Module {
        Module {
            types: vec![FuncType::new([I32, I32], [I32])],
            functions: vec![func(
                0,
                vec![LocalGet(0), LocalGet(1), Numeric(NumOp::I32Add)],
            )],
            exports: vec![export("add", 0)],
            ..Module::default()
        }
    }

    fn run1(m: &Module, name: &str, args: &[Value]) -> InvocationOutcome {
        let mut inst = Instance::instantiate(m, &HostConfig::default(), DEFAULT_FUEL).unwrap();
        inst.invoke(name, args, DEFAULT_FUEL).unwrap()
    }

    #[test]
    fn empty_module_instantiates() {
        let inst = Instance::instantiate(&Module::default(), &HostConfig::empty(), 10).unwrap();
        assert!(inst.memory().is_none());
        assert!(inst.trace().is_empty());
    }

    #[test]
    fn add() {
        assert_eq!(
            run1(&add_module(), "add", &[Value::I32(2), Value::I32(3)]),
            InvocationOutcome::Results(vec![Value::I32(5)])
        );
    }

    #[test]
    fn invoke_errors() {
        let mut inst =
            Instance::instantiate(&add_module(), &HostConfig::default(), DEFAULT_FUEL).unwrap();
        assert_eq!(
            inst.invoke("nope", &[], 10),
            Err(InvokeError::UnknownExport("nope".into()))
        );
        assert!(matches!(
            inst.invoke("add", &[Value::I32(1)], 10),
            Err(InvokeError::SignatureMismatch { .. })
        ));
    }

    #[test]
    fn unreachable_and_div_traps() {
        let m = Module {
            types: vec![FuncType::default(), FuncType::new([I32, I32], [I32])],
            functions: vec![
                func(0, vec![Unreachable]),
                func(1, vec![LocalGet(0), LocalGet(1), Numeric(NumOp::I32DivS)]),
            ],
            exports: vec![export("u", 0), export("div", 1)],
            ..Module::default()
        };
        assert_eq!(
            run1(&m, "u", &[]),
            InvocationOutcome::Trap(Trap {
                kind: TrapKind::Unreachable,
                function: Some(0)
            })
        );
        assert_eq!(
            run1(&m, "div", &[Value::I32(1), Value::I32(0)]),
            InvocationOutcome::Trap(Trap {
                kind: TrapKind::DivideByZero,
                function: Some(1)
            })
        );
    }

    #[test]
    fn host_import_links_and_records() {
        let m = Module {
            types: vec![FuncType::new([I32], []), FuncType::default()],
            imports: vec![Import {
                module: "env".into(),
                name: "log".into(),
                desc: ImportDesc::Func(0),
            }],
            functions: vec![func(1, vec![I32Const(42), Call(0)])],
            exports: vec![export("main", 1)],
            ..Module::default()
        };
        let mut inst = Instance::instantiate(&m, &HostConfig::default(), 100).unwrap();
        assert_eq!(
            inst.invoke("main", &[], 100),
            Ok(InvocationOutcome::Results(vec![]))
        );
        assert_eq!(
            inst.take_host_calls(),
            [HostCall {
                import: "env.log".into(),
                args: vec![Value::I32(42)]
            }]
        );
        assert!(inst.trace().call_targets.contains(&0));
        assert!(!inst.trace().entered.contains(&0));

        let Err(failure) = Instance::instantiate(&m, &HostConfig::empty(), 100) else {
            panic!("expected link error");
        };
        assert_eq!(
            failure.outcome,
            InvocationOutcome::LinkError("unknown import env.log".into())
        );
    }

    #[test]
    fn import_signature_must_match_exactly() {
        let m = Module {
            types: vec![FuncType::new([I64], [])],
            imports: vec![Import {
                module: "env".into(),
                name: "log".into(),
                desc: ImportDesc::Func(0),
            }],
            ..Module::default()
        };
        let failure = Instance::instantiate(&m, &HostConfig::default(), 1)
            .err()
            .unwrap();
        assert!(
            matches!(failure.outcome, InvocationOutcome::LinkError(msg) if msg.contains("incompatible"))
        );
    }

    #[test]
    fn element_segment_out_of_bounds() {
        let m = Module {
            types: vec![FuncType::default()],
            functions: vec![func(0, vec![])],
            tables: vec![TableType {
                limits: Limits { min: 1, max: None },
            }],
            elements: vec![ElementSegment {
                table_index: 0,
                offset: ConstExpr::i32(1),
                functions: vec![0],
            }],
            ..Module::default()
        };
        let failure = Instance::instantiate(&m, &HostConfig::empty(), 1)
            .err()
            .unwrap();
        assert_eq!(
            failure.outcome,
            InvocationOutcome::Trap(Trap {
                kind: TrapKind::OutOfBoundsTable,
                function: None
            })
        );
    }

    #[test]
    fn fuel_counts_every_op() {
        // body: i32.const, drop, end, return -> 4 ops
        let m = Module {
            types: vec![FuncType::default()],
            functions: vec![func(0, vec![I32Const(1), Drop])],
            exports: vec![export("f", 0)],
            ..Module::default()
        };
        let mut inst = Instance::instantiate(&m, &HostConfig::empty(), 0).unwrap();
        assert_eq!(
            inst.invoke("f", &[], 4),
            Ok(InvocationOutcome::Results(vec![]))
        );
        assert_eq!(
            inst.invoke("f", &[], 3),
            Ok(InvocationOutcome::Trap(Trap {
                kind: TrapKind::FuelExhausted,
                function: Some(0)
            }))
        );
    }

    #[test]
    fn loops_branches_and_memory() {
        // sum(n) = n + (n-1) + ... + 1, stored at address 8 and returned
        let m = Module {
            types: vec![FuncType::new([I32], [I32])],
            functions: vec![FunctionDef {
                type_index: 0,
                locals: vec![I32],
                body: vec![
                    Block {
                        ty: BlockType::Empty,
                        body: vec![Loop {
                            ty: BlockType::Empty,
                            body: vec![
                                LocalGet(0),
                                Numeric(NumOp::I32Eqz),
                                BrIf(1),
                                LocalGet(1),
                                LocalGet(0),
                                Numeric(NumOp::I32Add),
                                LocalSet(1),
                                LocalGet(0),
                                I32Const(1),
                                Numeric(NumOp::I32Sub),
                                LocalSet(0),
                                Br(0),
                            ],
                        }],
                    },
                    I32Const(8),
                    LocalGet(1),
                    Store(
                        StoreOp::I32Store,
                        MemArg {
                            align: 2,
                            offset: 0,
                        },
                    ),
                    I32Const(4),
                    Load(
                        LoadOp::I32Load,
                        MemArg {
                            align: 2,
                            offset: 4,
                        },
                    ),
                ],
            }],
            memories: vec![MemType {
                limits: Limits { min: 1, max: None },
            }],
            exports: vec![export("sum", 0)],
            ..Module::default()
        };
        assert_eq!(
            run1(&m, "sum", &[Value::I32(100)]),
            InvocationOutcome::Results(vec![Value::I32(5050)])
        );
    }

    #[test]
    fn deep_recursion_exhausts_stack() {
        let m = Module {
            types: vec![FuncType::default()],
            functions: vec![func(0, vec![Call(0)])],
            exports: vec![export("f", 0)],
            ..Module::default()
        };
        assert_eq!(
            run1(&m, "f", &[]),
            InvocationOutcome::Trap(Trap {
                kind: TrapKind::StackExhausted,
                function: Some(0)
            })
        );
    }
}
