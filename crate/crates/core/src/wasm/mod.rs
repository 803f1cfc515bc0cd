//! In-memory representation of WebAssembly 1.0 (MVP) modules, with a
//! binary decoder, a canonical encoder and a full structural validator.
//!
//! Function, table, memory and global index spaces follow the binary format:
//! imports of a kind come first, followed by the module's own definitions.

mod decode;
mod encode;
mod leb;
pub mod names;
mod opcodes;
mod sections;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use decode::{decode, DecodeError};
pub use encode::{encode, EncodeError};
pub use opcodes::{LoadOp, NumOp, StoreOp};
pub use sections::{section_sizes, SectionId, SectionSizes};
pub use validate::{validate_module, ValidationError, ValidationReport};

pub const MAGIC: [u8; 4] = [0x00, 0x61, 0x73, 0x6D];
pub const VERSION: [u8; 4] = [0x01, 0x00, 0x00, 0x00];

/// Largest number of 64 KiB pages a 32-bit linear memory can address.
pub const MAX_PAGES: u32 = 65536;
pub const PAGE_SIZE: usize = 65536;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValType {
    I32,
    I64,
    F32,
    F64,
}

impl ValType {
    pub(crate) fn from_byte(b: u8) -> Option<ValType> {
        match b {
            0x7F => Some(ValType::I32),
            0x7E => Some(ValType::I64),
            0x7D => Some(ValType::F32),
            0x7C => Some(ValType::F64),
            _ => None,
        }
    }

    pub(crate) fn to_byte(self) -> u8 {
        match self {
            ValType::I32 => 0x7F,
            ValType::I64 => 0x7E,
            ValType::F32 => 0x7D,
            ValType::F64 => 0x7C,
        }
    }
}

impl fmt::Display for ValType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValType::I32 => "i32",
            ValType::I64 => "i64",
            ValType::F32 => "f32",
            ValType::F64 => "f64",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct FuncType {
    pub params: Vec<ValType>,
    /// At most one result in the MVP.
    pub results: Vec<ValType>,
}

impl FuncType {
    pub fn new(params: impl Into<Vec<ValType>>, results: impl Into<Vec<ValType>>) -> Self {
        FuncType {
            params: params.into(),
            results: results.into(),
        }
    }
}

impl fmt::Display for FuncType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |tys: &[ValType]| {
            tys.iter()
                .map(ValType::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        };
        write!(f, "[{}] -> [{}]", list(&self.params), list(&self.results))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub min: u32,
    pub max: Option<u32>,
}

/// The only MVP element type is `funcref`, so a table type is just its limits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableType {
    pub limits: Limits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemType {
    pub limits: Limits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GlobalType {
    pub value_type: ValType,
    pub mutable: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ImportDesc {
    Func(u32),
    Table(TableType),
    Memory(MemType),
    Global(GlobalType),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Import {
    pub module: String,
    pub name: String,
    pub desc: ImportDesc,
}

impl Import {
    /// `module.name`, the form used in host-call logs and diagnostics.
    pub fn qualified_name(&self) -> String {
        format!("{}.{}", self.module, self.name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionDef {
    pub type_index: u32,
    /// Declared locals, already expanded (one entry per local, excluding params).
    pub locals: Vec<ValType>,
    pub body: Vec<Instruction>,
}

/// A constant initializer expression (global init, segment offset).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstExpr(pub Vec<Instruction>);

impl ConstExpr {
    pub fn i32(v: i32) -> Self {
        ConstExpr(vec![Instruction::I32Const(v)])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalDef {
    pub ty: GlobalType,
    pub init: ConstExpr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExternalKind {
    Func,
    Table,
    Memory,
    Global,
}

impl ExternalKind {
    pub(crate) fn from_byte(b: u8) -> Option<ExternalKind> {
        match b {
            0 => Some(ExternalKind::Func),
            1 => Some(ExternalKind::Table),
            2 => Some(ExternalKind::Memory),
            3 => Some(ExternalKind::Global),
            _ => None,
        }
    }

    pub(crate) fn to_byte(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Export {
    pub name: String,
    pub kind: ExternalKind,
    pub index: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ElementSegment {
    pub table_index: u32,
    pub offset: ConstExpr,
    pub functions: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataSegment {
    pub memory_index: u32,
    pub offset: ConstExpr,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CustomSection {
    pub name: String,
    pub data: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockType {
    Empty,
    Value(ValType),
}

impl BlockType {
    pub fn results(self) -> Vec<ValType> {
        match self {
            BlockType::Empty => Vec::new(),
            BlockType::Value(t) => vec![t],
        }
    }

    pub fn arity(self) -> usize {
        match self {
            BlockType::Empty => 0,
            BlockType::Value(_) => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MemArg {
    /// log2 of the alignment hint.
    pub align: u32,
    pub offset: u32,
}

/// An MVP instruction. Structured control instructions own their nested
/// bodies; the implicit `end`/`else` markers of the binary format are not
/// represented.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    Unreachable,
    Nop,
    Block {
        ty: BlockType,
        body: Vec<Instruction>,
    },
    Loop {
        ty: BlockType,
        body: Vec<Instruction>,
    },
    If {
        ty: BlockType,
        then_body: Vec<Instruction>,
        else_body: Vec<Instruction>,
    },
    Br(u32),
    BrIf(u32),
    BrTable {
        targets: Vec<u32>,
        default: u32,
    },
    Return,
    Call(u32),
    CallIndirect {
        type_index: u32,
    },
    Drop,
    Select,
    LocalGet(u32),
    LocalSet(u32),
    LocalTee(u32),
    GlobalGet(u32),
    GlobalSet(u32),
    Load(LoadOp, MemArg),
    Store(StoreOp, MemArg),
    MemorySize,
    MemoryGrow,
    I32Const(i32),
    I64Const(i64),
    /// Raw IEEE-754 bits, so NaN payloads survive and equality is exact.
    F32Const(u32),
    F64Const(u64),
    Numeric(NumOp),
}

impl Instruction {
    /// Visits this instruction and every instruction nested inside it, in
    /// program order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Instruction)) {
        f(self);
        match self {
            Instruction::Block { body, .. } | Instruction::Loop { body, .. } => {
                body.iter().for_each(|i| i.visit(f))
            }
            Instruction::If {
                then_body,
                else_body,
                ..
            } => {
                then_body.iter().for_each(|i| i.visit(f));
                else_body.iter().for_each(|i| i.visit(f));
            }
            _ => {}
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut Instruction)) {
        f(self);
        match self {
            Instruction::Block { body, .. } | Instruction::Loop { body, .. } => {
                body.iter_mut().for_each(|i| i.visit_mut(f))
            }
            Instruction::If {
                then_body,
                else_body,
                ..
            } => {
                then_body.iter_mut().for_each(|i| i.visit_mut(f));
                else_body.iter_mut().for_each(|i| i.visit_mut(f));
            }
            _ => {}
        }
    }
}

/// Calls `f` on every instruction of `body`, recursing into nested blocks.
pub fn visit_body<'a>(body: &'a [Instruction], f: &mut impl FnMut(&'a Instruction)) {
    for instr in body {
        instr.visit(f);
    }
}

pub fn visit_body_mut(body: &mut [Instruction], f: &mut impl FnMut(&mut Instruction)) {
    for instr in body {
        instr.visit_mut(f);
    }
}

/// A decoded WebAssembly module.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Module {
    pub types: Vec<FuncType>,
    pub imports: Vec<Import>,
    pub functions: Vec<FunctionDef>,
    pub tables: Vec<TableType>,
    pub memories: Vec<MemType>,
    pub globals: Vec<GlobalDef>,
    pub exports: Vec<Export>,
    pub start: Option<u32>,
    pub elements: Vec<ElementSegment>,
    pub data: Vec<DataSegment>,
    /// Custom sections in the order they appeared. The encoder places them
    /// after all known sections.
    pub custom_sections: Vec<CustomSection>,
}

impl Module {
    pub fn num_imported_functions(&self) -> u32 {
        self.imported_functions().count() as u32
    }

    pub fn num_imported_globals(&self) -> u32 {
        self.imports
            .iter()
            .filter(|i| matches!(i.desc, ImportDesc::Global(_)))
            .count() as u32
    }

    /// Size of the function index space (imports plus definitions).
    pub fn num_functions(&self) -> u32 {
        self.num_imported_functions() + self.functions.len() as u32
    }

    /// `(position in imports, type index)` of every function import, in
    /// function-index order.
    pub fn imported_functions(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.imports
            .iter()
            .enumerate()
            .filter_map(|(pos, i)| match i.desc {
                ImportDesc::Func(ty) => Some((pos, ty)),
                _ => None,
            })
    }

    pub fn is_imported_function(&self, func: u32) -> bool {
        func < self.num_imported_functions()
    }

    /// Type index of a function in the combined index space.
    pub fn func_type_index(&self, func: u32) -> Option<u32> {
        let imported = self.num_imported_functions();
        if func < imported {
            self.imported_functions()
                .nth(func as usize)
                .map(|(_, ty)| ty)
        } else {
            self.functions
                .get((func - imported) as usize)
                .map(|f| f.type_index)
        }
    }

    pub fn func_type(&self, func: u32) -> Option<&FuncType> {
        self.func_type_index(func)
            .and_then(|ty| self.types.get(ty as usize))
    }

    /// Definition for a function index, `None` for imports and out-of-range indices.
    pub fn defined_function(&self, func: u32) -> Option<&FunctionDef> {
        func.checked_sub(self.num_imported_functions())
            .and_then(|i| self.functions.get(i as usize))
    }

    pub fn global_types(&self) -> Vec<GlobalType> {
        self.imports
            .iter()
            .filter_map(|i| match i.desc {
                ImportDesc::Global(g) => Some(g),
                _ => None,
            })
            .chain(self.globals.iter().map(|g| g.ty))
            .collect()
    }

    pub fn table_types(&self) -> Vec<TableType> {
        self.imports
            .iter()
            .filter_map(|i| match i.desc {
                ImportDesc::Table(t) => Some(t),
                _ => None,
            })
            .chain(self.tables.iter().copied())
            .collect()
    }

    pub fn memory_types(&self) -> Vec<MemType> {
        self.imports
            .iter()
            .filter_map(|i| match i.desc {
                ImportDesc::Memory(m) => Some(m),
                _ => None,
            })
            .chain(self.memories.iter().copied())
            .collect()
    }

    pub fn exported_function(&self, name: &str) -> Option<u32> {
        self.exports
            .iter()
            .find(|e| e.kind == ExternalKind::Func && e.name == name)
            .map(|e| e.index)
    }
}
