//! Seeded generator of small valid modules and matching workloads.
//!
//! Generated code never contains `unreachable` and never imports
//! `env.abort`, so an `unreachable` trap in a run can only come from a stub.
//! Direct calls only go from lower to higher defined indices and the table
//! only holds functions that cannot reach a `call_indirect`, so there is no
//! recursion. Loops are bounded by a dedicated counter local.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::interp::{Invocation, Value, Workload};
use crate::wasm::{
    BlockType, ConstExpr, DataSegment, ElementSegment, Export, ExternalKind, FuncType, FunctionDef,
    GlobalDef, GlobalType, Import, ImportDesc, Instruction, Limits, LoadOp, MemArg, MemType,
    Module, NumOp, StoreOp, TableType, ValType, PAGE_SIZE,
};

use Instruction as I;
use ValType::{F64, I32, I64};

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub min_functions: usize,
    pub max_functions: usize,
    pub max_invocations: usize,
    pub fuel: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            min_functions: 1,
            max_functions: 6,
            max_invocations: 5,
            fuel: 100_000,
        }
    }
}

/// A module and a workload that only invokes its exports with
/// well-typed arguments.
pub fn case(seed: u64, cfg: &GenConfig) -> (Module, Workload) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = generate_module(&mut rng, cfg);
    let w = generate_workload(&mut rng, &m, cfg);
    (m, w)
}

pub fn module(seed: u64) -> Module {
    case(seed, &GenConfig::default()).0
}

struct Shape {
    types: Vec<FuncType>,
    /// Type index of every function in the combined index space.
    func_types: Vec<u32>,
    imported: u32,
    globals: Vec<GlobalType>,
    memory: bool,
    table_len: u32,
    /// First defined function (relative index) allowed in the table.
    table_split: usize,
}

struct Body<'a> {
    shape: &'a Shape,
    rng: &'a mut ChaCha8Rng,
    /// Relative index of the function being generated.
    me: usize,
    locals: Vec<ValType>,
    /// Local reserved for loop counters; never written by other statements.
    counter: u32,
    results: Vec<ValType>,
    in_loop: bool,
}

fn random_type(rng: &mut ChaCha8Rng) -> FuncType {
    let vt = |rng: &mut ChaCha8Rng| *[I32, I32, I64, F64].choose(rng).unwrap();
    let params = (0..rng.random_range(0..=2))
        .map(|_| vt(rng))
        .collect::<Vec<_>>();
    let results = if rng.random_bool(0.7) {
        vec![*[I32, I32, I64].choose(rng).unwrap()]
    } else {
        vec![]
    };
    FuncType { params, results }
}

fn generate_module(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> Module {
    let mut types = vec![FuncType::default()];
    for _ in 0..rng.random_range(1..=3) {
        let t = random_type(rng);
        if !types.contains(&t) {
            types.push(t);
        }
    }
    let type_of = |t: FuncType, types: &mut Vec<FuncType>| match types.iter().position(|x| *x == t)
    {
        Some(i) => i as u32,
        None => {
            types.push(t);
            (types.len() - 1) as u32
        }
    };

    let mut imports = Vec::new();
    let mut func_types = Vec::new();
    for (name, vt) in [("log", I32), ("log64", I64)] {
        if rng.random_bool(0.5) {
            let ty = type_of(FuncType::new([vt], []), &mut types);
            imports.push(Import {
                module: "env".into(),
                name: name.into(),
                desc: ImportDesc::Func(ty),
            });
            func_types.push(ty);
        }
    }
    let imported = imports.len() as u32;

    let n = rng.random_range(cfg.min_functions..=cfg.max_functions.max(cfg.min_functions));
    let type_count = types.len() as u32;
    for _ in 0..n {
        func_types.push(rng.random_range(0..type_count));
    }

    let globals: Vec<GlobalType> = (0..rng.random_range(0..=2))
        .map(|_| GlobalType {
            value_type: *[I32, I64].choose(rng).unwrap(),
            mutable: rng.random_bool(0.7),
        })
        .collect();
    let memory = rng.random_bool(0.6);
    let table_len = if n >= 2 && rng.random_bool(0.5) {
        rng.random_range(1..=4)
    } else {
        0
    };
    let shape = Shape {
        types: types.clone(),
        func_types,
        imported,
        globals: globals.clone(),
        memory,
        table_len,
        table_split: n / 2,
    };

    let mut functions = Vec::with_capacity(n);
    for me in 0..n {
        functions.push(generate_function(rng, &shape, me));
    }

    let mut elements = Vec::new();
    let mut tables = Vec::new();
    if table_len > 0 {
        tables.push(TableType {
            limits: Limits {
                min: table_len,
                max: None,
            },
        });
        let mut candidates: Vec<u32> = (shape.table_split..n)
            .map(|d| imported + d as u32)
            .collect();
        candidates.extend(0..imported);
        let offset = rng.random_range(0..table_len);
        let len = rng.random_range(1..=table_len - offset);
        let funcs = (0..len).map(|_| *candidates.choose(rng).unwrap()).collect();
        elements.push(ElementSegment {
            table_index: 0,
            offset: ConstExpr::i32(offset as i32),
            functions: funcs,
        });
    }

    let memories = if memory {
        vec![MemType {
            limits: Limits {
                min: 1,
                max: Some(rng.random_range(1..=3)),
            },
        }]
    } else {
        vec![]
    };
    let mut data = Vec::new();
    if memory && rng.random_bool(0.5) {
        let len = rng.random_range(1..=16);
        data.push(DataSegment {
            memory_index: 0,
            offset: ConstExpr::i32(rng.random_range(0..256)),
            bytes: (0..len).map(|_| rng.random()).collect(),
        });
    }

    let globals = globals
        .iter()
        .map(|ty| GlobalDef {
            ty: *ty,
            init: ConstExpr(vec![match ty.value_type {
                I64 => I::I64Const(rng.random_range(-100..100)),
                _ => I::I32Const(rng.random_range(-100..100)),
            }]),
        })
        .collect();

    let mut exports = Vec::new();
    for d in 0..n {
        if rng.random_bool(0.6) || (d == 0 && exports.is_empty()) {
            exports.push(Export {
                name: format!("f{d}"),
                kind: ExternalKind::Func,
                index: imported + d as u32,
            });
        }
    }
    if memory && rng.random_bool(0.3) {
        exports.push(Export {
            name: "memory".into(),
            kind: ExternalKind::Memory,
            index: 0,
        });
    }

    let start = (0..n)
        .filter(|d| functions[*d].type_index == 0)
        .collect::<Vec<_>>()
        .choose(rng)
        .filter(|_| rng.random_bool(0.3))
        .map(|d| imported + *d as u32);

    Module {
        types,
        imports,
        functions,
        tables,
        memories,
        globals,
        exports,
        start,
        elements,
        data,
        custom_sections: Vec::new(),
    }
}

fn generate_function(rng: &mut ChaCha8Rng, shape: &Shape, me: usize) -> FunctionDef {
    let type_index = shape.func_types[shape.imported as usize + me];
    let ty = &shape.types[type_index as usize];
    let mut extra: Vec<ValType> = (0..rng.random_range(0..=2))
        .map(|_| *[I32, I64].choose(rng).unwrap())
        .collect();
    extra.push(I32);
    let mut locals = ty.params.clone();
    locals.extend(&extra);
    let counter = (locals.len() - 1) as u32;
    let mut b = Body {
        shape,
        rng,
        me,
        locals,
        counter,
        results: ty.results.clone(),
        in_loop: false,
    };
    let mut body = Vec::new();
    // At least two statements, so a stub is never larger than the original.
    let count = b.rng.random_range(2..=5);
    for _ in 0..count {
        b.statement(&mut body, 2);
    }
    if let Some(r) = b.results.first().copied() {
        b.expr(&mut body, r, 3);
    }
    FunctionDef {
        type_index,
        locals: extra,
        body,
    }
}

const I32_BINOPS: &[NumOp] = &[
    NumOp::I32Add,
    NumOp::I32Sub,
    NumOp::I32Mul,
    NumOp::I32And,
    NumOp::I32Or,
    NumOp::I32Xor,
    NumOp::I32Shl,
    NumOp::I32ShrS,
    NumOp::I32ShrU,
    NumOp::I32Rotl,
    NumOp::I32Eq,
    NumOp::I32LtS,
    NumOp::I32GtU,
    NumOp::I32DivU,
    NumOp::I32RemS,
];
const I64_BINOPS: &[NumOp] = &[
    NumOp::I64Add,
    NumOp::I64Sub,
    NumOp::I64Mul,
    NumOp::I64And,
    NumOp::I64Or,
    NumOp::I64Xor,
    NumOp::I64Shl,
    NumOp::I64ShrU,
    NumOp::I64Rotr,
    NumOp::I64DivS,
    NumOp::I64RemU,
];
const F64_BINOPS: &[NumOp] = &[
    NumOp::F64Add,
    NumOp::F64Sub,
    NumOp::F64Mul,
    NumOp::F64Div,
    NumOp::F64Min,
    NumOp::F64Max,
];

impl Body<'_> {
    fn block_type(&self, t: ValType) -> BlockType {
        BlockType::Value(t)
    }

    /// Defined functions this body may call directly, as absolute indices.
    fn callees(&self) -> Vec<u32> {
        let defined = self.shape.func_types.len() - self.shape.imported as usize;
        let mut out: Vec<u32> = (0..self.shape.imported).collect();
        out.extend((self.me + 1..defined).map(|d| self.shape.imported + d as u32));
        out
    }

    fn may_call_indirect(&self) -> bool {
        self.shape.table_len > 0 && self.me < self.shape.table_split
    }

    fn func_type(&self, f: u32) -> &FuncType {
        &self.shape.types[self.shape.func_types[f as usize] as usize]
    }

    fn args(&mut self, out: &mut Vec<Instruction>, params: &[ValType], depth: u32) {
        for p in params {
            self.expr(out, *p, depth);
        }
    }

    fn constant(&mut self, t: ValType) -> Instruction {
        let small = self.rng.random_bool(0.7);
        match t {
            I32 => I::I32Const(if small {
                self.rng.random_range(-8..=8)
            } else {
                self.rng.random()
            }),
            I64 => I::I64Const(if small {
                self.rng.random_range(-8..=8)
            } else {
                self.rng.random()
            }),
            F64 => I::F64Const(if small {
                f64::from(self.rng.random_range(-8i32..=8)).to_bits()
            } else {
                self.rng.random::<f64>().to_bits() ^ (u64::from(self.rng.random_bool(0.5)) << 63)
            }),
            ValType::F32 => I::F32Const(self.rng.random::<f32>().to_bits()),
        }
    }

    fn address(&mut self, out: &mut Vec<Instruction>) {
        // Mostly in bounds; occasionally right at the end of the first page.
        let addr = if self.rng.random_bool(0.05) {
            PAGE_SIZE as i32 - 2
        } else {
            self.rng.random_range(0..64) * 4
        };
        out.push(I::I32Const(addr));
    }

    fn leaf(&mut self, out: &mut Vec<Instruction>, t: ValType) {
        let locals: Vec<u32> = (0..self.locals.len() as u32)
            .filter(|l| self.locals[*l as usize] == t)
            .collect();
        let globals: Vec<u32> = (0..self.shape.globals.len() as u32)
            .filter(|g| self.shape.globals[*g as usize].value_type == t)
            .collect();
        match self.rng.random_range(0..3) {
            0 if !locals.is_empty() => out.push(I::LocalGet(*locals.choose(self.rng).unwrap())),
            1 if !globals.is_empty() => out.push(I::GlobalGet(*globals.choose(self.rng).unwrap())),
            _ => {
                let c = self.constant(t);
                out.push(c);
            }
        }
    }

    fn expr(&mut self, out: &mut Vec<Instruction>, t: ValType, depth: u32) {
        if depth == 0 {
            return self.leaf(out, t);
        }
        let d = depth - 1;
        match self.rng.random_range(0..10) {
            0..=2 => {
                let ops = match t {
                    I32 => I32_BINOPS,
                    I64 => I64_BINOPS,
                    _ => F64_BINOPS,
                };
                let op = *ops.choose(self.rng).unwrap();
                let params = op.params();
                self.args(out, params, d);
                out.push(I::Numeric(op));
            }
            3 => {
                let calls: Vec<u32> = self
                    .callees()
                    .into_iter()
                    .filter(|f| self.func_type(*f).results == [t])
                    .collect();
                match calls.choose(self.rng) {
                    Some(&f) => {
                        let params = self.func_type(f).params.clone();
                        self.args(out, &params, d);
                        out.push(I::Call(f));
                    }
                    None => self.leaf(out, t),
                }
            }
            4 if self.may_call_indirect() => {
                let candidates: Vec<u32> = (0..self.shape.types.len() as u32)
                    .filter(|ty| self.shape.types[*ty as usize].results == [t])
                    .collect();
                match candidates.choose(self.rng) {
                    Some(&ty) => {
                        let params = self.shape.types[ty as usize].params.clone();
                        self.args(out, &params, d);
                        let slot = self.rng.random_range(0..=self.shape.table_len) as i32;
                        out.push(I::I32Const(slot));
                        out.push(I::CallIndirect { type_index: ty });
                    }
                    None => self.leaf(out, t),
                }
            }
            5 if self.shape.memory && t != F64 => {
                self.address(out);
                let (op, align) = match t {
                    I32 => *[
                        (LoadOp::I32Load, 2),
                        (LoadOp::I32Load8S, 0),
                        (LoadOp::I32Load16U, 1),
                    ]
                    .choose(self.rng)
                    .unwrap(),
                    _ => *[
                        (LoadOp::I64Load, 3),
                        (LoadOp::I64Load32S, 2),
                        (LoadOp::I64Load8U, 0),
                    ]
                    .choose(self.rng)
                    .unwrap(),
                };
                out.push(I::Load(op, MemArg { align, offset: 0 }));
            }
            6 => {
                self.condition(out, d);
                let mut then_body = Vec::new();
                self.expr(&mut then_body, t, d);
                let mut else_body = Vec::new();
                self.expr(&mut else_body, t, d);
                out.push(I::If {
                    ty: self.block_type(t),
                    then_body,
                    else_body,
                });
            }
            7 => {
                self.expr(out, t, d);
                self.expr(out, t, d);
                self.condition(out, d);
                out.push(I::Select);
            }
            8 => match t {
                I32 => {
                    if self.rng.random_bool(0.5) {
                        self.expr(out, I64, d);
                        out.push(I::Numeric(NumOp::I32WrapI64));
                    } else {
                        self.expr(out, F64, d);
                        self.expr(out, F64, d);
                        out.push(I::Numeric(
                            *[NumOp::F64Lt, NumOp::F64Eq, NumOp::F64Ge]
                                .choose(self.rng)
                                .unwrap(),
                        ));
                    }
                }
                I64 => {
                    self.expr(out, I32, d);
                    out.push(I::Numeric(if self.rng.random_bool(0.5) {
                        NumOp::I64ExtendI32S
                    } else {
                        NumOp::I64ExtendI32U
                    }));
                }
                _ => {
                    self.expr(out, I32, d);
                    out.push(I::Numeric(NumOp::F64ConvertI32S));
                }
            },
            _ => self.leaf(out, t),
        }
    }

    fn condition(&mut self, out: &mut Vec<Instruction>, depth: u32) {
        self.expr(out, I32, depth);
        if self.rng.random_bool(0.3) {
            out.push(I::Numeric(NumOp::I32Eqz));
        }
    }

    fn statement(&mut self, out: &mut Vec<Instruction>, depth: u32) {
        let d = depth.saturating_sub(1);
        match self.rng.random_range(0..11) {
            0 | 1 => {
                let writable: Vec<u32> = (0..self.counter).collect();
                match writable.choose(self.rng) {
                    Some(&l) => {
                        let t = self.locals[l as usize];
                        self.expr(out, t, depth);
                        out.push(if self.rng.random_bool(0.3) {
                            I::LocalTee(l)
                        } else {
                            I::LocalSet(l)
                        });
                        if matches!(out.last(), Some(I::LocalTee(_))) {
                            out.push(I::Drop);
                        }
                    }
                    None => self.drop_expr(out, depth),
                }
            }
            2 => {
                let mutable: Vec<u32> = (0..self.shape.globals.len() as u32)
                    .filter(|g| self.shape.globals[*g as usize].mutable)
                    .collect();
                match mutable.choose(self.rng) {
                    Some(&g) => {
                        let t = self.shape.globals[g as usize].value_type;
                        self.expr(out, t, depth);
                        out.push(I::GlobalSet(g));
                    }
                    None => self.drop_expr(out, depth),
                }
            }
            3 if self.shape.memory => {
                self.address(out);
                let (op, t, align) = *[
                    (StoreOp::I32Store, I32, 2),
                    (StoreOp::I32Store8, I32, 0),
                    (StoreOp::I64Store, I64, 3),
                    (StoreOp::I64Store16, I64, 1),
                    (StoreOp::F64Store, F64, 3),
                ]
                .choose(self.rng)
                .unwrap();
                self.expr(out, t, depth);
                out.push(I::Store(op, MemArg { align, offset: 0 }));
            }
            3 | 4 => {
                let calls = self.callees();
                match calls.choose(self.rng) {
                    Some(&f) => {
                        let ty = self.func_type(f).clone();
                        self.args(out, &ty.params, depth);
                        out.push(I::Call(f));
                        if !ty.results.is_empty() {
                            out.push(I::Drop);
                        }
                    }
                    None => self.drop_expr(out, depth),
                }
            }
            5 if depth > 0 => {
                self.condition(out, d);
                let mut then_body = Vec::new();
                self.statement(&mut then_body, d);
                let mut else_body = Vec::new();
                if self.rng.random_bool(0.5) {
                    self.statement(&mut else_body, d);
                }
                out.push(I::If {
                    ty: BlockType::Empty,
                    then_body,
                    else_body,
                });
            }
            6 if depth > 0 => {
                let mut body = Vec::new();
                self.statement(&mut body, d);
                self.condition(&mut body, d);
                body.push(I::BrIf(0));
                self.statement(&mut body, d);
                out.push(I::Block {
                    ty: BlockType::Empty,
                    body,
                });
            }
            7 if depth > 0 && !self.in_loop => {
                let c = self.counter;
                out.push(I::I32Const(self.rng.random_range(1..=4)));
                out.push(I::LocalSet(c));
                self.in_loop = true;
                let mut body = Vec::new();
                self.statement(&mut body, d);
                self.in_loop = false;
                body.extend([
                    I::LocalGet(c),
                    I::I32Const(1),
                    I::Numeric(NumOp::I32Sub),
                    I::LocalTee(c),
                    I::BrIf(0),
                ]);
                out.push(I::Loop {
                    ty: BlockType::Empty,
                    body,
                });
            }
            8 if depth > 0 => {
                // block { block { idx; br_table [0 1] 1 } stmt }
                let mut inner = Vec::new();
                self.expr(&mut inner, I32, d);
                inner.push(I::BrTable {
                    targets: vec![0, 1],
                    default: 1,
                });
                let mut outer = vec![I::Block {
                    ty: BlockType::Empty,
                    body: inner,
                }];
                self.statement(&mut outer, d);
                out.push(I::Block {
                    ty: BlockType::Empty,
                    body: outer,
                });
            }
            9 if depth > 0 => {
                self.condition(out, d);
                let mut then_body = Vec::new();
                if let Some(r) = self.results.first().copied() {
                    self.expr(&mut then_body, r, d);
                }
                then_body.push(I::Return);
                out.push(I::If {
                    ty: BlockType::Empty,
                    then_body,
                    else_body: vec![],
                });
            }
            10 if self.shape.memory && self.rng.random_bool(0.3) => {
                out.push(I::I32Const(self.rng.random_range(0..=1)));
                out.push(I::MemoryGrow);
                out.push(I::Drop);
            }
            _ => self.drop_expr(out, depth),
        }
    }

    fn drop_expr(&mut self, out: &mut Vec<Instruction>, depth: u32) {
        let t = *[I32, I64, F64].choose(self.rng).unwrap();
        self.expr(out, t, depth);
        out.push(I::Drop);
    }
}

fn random_value(rng: &mut ChaCha8Rng, t: ValType) -> Value {
    let small = rng.random_bool(0.7);
    match t {
        I32 => Value::I32(if small {
            rng.random_range(-5..=5)
        } else {
            rng.random()
        }),
        I64 => Value::I64(if small {
            rng.random_range(-5..=5)
        } else {
            rng.random()
        }),
        F64 => Value::F64(if small {
            f64::from(rng.random_range(-5i32..=5))
        } else {
            rng.random::<f64>() * 1e6
        }),
        ValType::F32 => Value::F32(rng.random::<f32>()),
    }
}

fn generate_workload(rng: &mut ChaCha8Rng, m: &Module, cfg: &GenConfig) -> Workload {
    let exports: Vec<(&str, u32)> = m
        .exports
        .iter()
        .filter(|e| e.kind == ExternalKind::Func)
        .map(|e| (e.name.as_str(), e.index))
        .collect();
    let count = rng.random_range(0..=cfg.max_invocations);
    let mut invocations = Vec::with_capacity(count);
    for _ in 0..count {
        let Some(&(name, f)) = exports.choose(rng) else {
            break;
        };
        let ty = m.func_type(f).expect("exported function has a type");
        let args: Vec<Value> = ty.params.iter().map(|p| random_value(rng, *p)).collect();
        invocations.push(Invocation::new(name, args));
    }
    Workload::new(invocations).with_fuel(cfg.fuel)
}
