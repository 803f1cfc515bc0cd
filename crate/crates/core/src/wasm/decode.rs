use thiserror::Error;

use super::leb::{self, LebError};

type LebReader<T> = fn(&[u8]) -> std::result::Result<(T, usize), LebError>;
use super::*;

/// Nested `block`/`loop`/`if` deeper than this is rejected rather than risking
/// the native stack of the recursive decoder, validator and encoder.
pub(crate) const MAX_NESTING: usize = 1024;
/// Total declared locals per function, beyond which bodies are rejected.
pub(crate) const MAX_LOCALS: u64 = 50_000;

/// A binary that does not follow the MVP binary format.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("malformed binary at offset {offset}: {reason}")]
pub struct DecodeError {
    /// Byte offset into the input where the problem was detected.
    pub offset: usize,
    pub reason: String,
}

type Result<T> = std::result::Result<T, DecodeError>;

fn err<T>(offset: usize, reason: impl Into<String>) -> Result<T> {
    Err(DecodeError {
        offset,
        reason: reason.into(),
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    /// Absolute offset of `bytes[0]` in the whole input.
    base: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], base: usize) -> Self {
        Reader {
            bytes,
            pos: 0,
            base,
        }
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn byte(&mut self) -> Result<u8> {
        match self.bytes.get(self.pos) {
            Some(&b) => {
                self.pos += 1;
                Ok(b)
            }
            None => err(self.offset(), "unexpected end of input"),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return err(self.offset(), "unexpected end of input");
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn leb<T>(&mut self, read: LebReader<T>) -> Result<T> {
        match read(&self.bytes[self.pos..]) {
            Ok((v, n)) => {
                self.pos += n;
                Ok(v)
            }
            Err(LebError::Truncated) => err(self.offset(), "unexpected end of input"),
            Err(LebError::Overflow) => err(self.offset(), "malformed LEB128 integer"),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        self.leb(leb::read_u32)
    }

    fn i32(&mut self) -> Result<i32> {
        self.leb(leb::read_i32)
    }

    fn i64(&mut self) -> Result<i64> {
        self.leb(leb::read_i64)
    }

    /// Reads a vector length, rejecting counts that cannot possibly fit in
    /// the remaining input (every element takes at least one byte).
    fn count(&mut self) -> Result<usize> {
        let at = self.offset();
        let n = self.u32()? as usize;
        if n > self.remaining() {
            return err(at, "vector length exceeds remaining input");
        }
        Ok(n)
    }

    fn name(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let at = self.offset();
        let raw = self.take(len)?;
        match std::str::from_utf8(raw) {
            Ok(s) => Ok(s.to_owned()),
            Err(_) => err(at, "malformed UTF-8 encoding"),
        }
    }

    fn val_type(&mut self) -> Result<ValType> {
        let at = self.offset();
        let b = self.byte()?;
        ValType::from_byte(b).map_or_else(|| err(at, format!("invalid value type 0x{b:02X}")), Ok)
    }

    fn limits(&mut self) -> Result<Limits> {
        let at = self.offset();
        match self.byte()? {
            0x00 => Ok(Limits {
                min: self.u32()?,
                max: None,
            }),
            0x01 => Ok(Limits {
                min: self.u32()?,
                max: Some(self.u32()?),
            }),
            flag => err(at, format!("invalid limits flag 0x{flag:02X}")),
        }
    }

    fn table_type(&mut self) -> Result<TableType> {
        let at = self.offset();
        let elem = self.byte()?;
        if elem != 0x70 {
            return err(at, format!("invalid element type 0x{elem:02X}"));
        }
        Ok(TableType {
            limits: self.limits()?,
        })
    }

    fn global_type(&mut self) -> Result<GlobalType> {
        let value_type = self.val_type()?;
        let at = self.offset();
        let mutable = match self.byte()? {
            0 => false,
            1 => true,
            b => return err(at, format!("invalid mutability 0x{b:02X}")),
        };
        Ok(GlobalType {
            value_type,
            mutable,
        })
    }

    fn block_type(&mut self) -> Result<BlockType> {
        let at = self.offset();
        match self.byte()? {
            0x40 => Ok(BlockType::Empty),
            b => ValType::from_byte(b)
                .map(BlockType::Value)
                .map_or_else(|| err(at, format!("invalid block type 0x{b:02X}")), Ok),
        }
    }

    fn zero_byte(&mut self) -> Result<()> {
        let at = self.offset();
        match self.byte()? {
            0 => Ok(()),
            _ => err(at, "zero byte expected"),
        }
    }

    fn mem_arg(&mut self) -> Result<MemArg> {
        Ok(MemArg {
            align: self.u32()?,
            offset: self.u32()?,
        })
    }

    /// Reads instructions up to a terminating `end` or `else`; returns the
    /// sequence and the terminator opcode.
    fn instructions(&mut self, depth: usize) -> Result<(Vec<Instruction>, u8)> {
        if depth > MAX_NESTING {
            return err(self.offset(), "control nesting too deep");
        }
        let mut out = Vec::new();
        loop {
            let at = self.offset();
            let op = self.byte()?;
            let instr = match op {
                0x0B | 0x05 => return Ok((out, op)),
                0x00 => Instruction::Unreachable,
                0x01 => Instruction::Nop,
                0x02 | 0x03 => {
                    let ty = self.block_type()?;
                    let (body, term) = self.instructions(depth + 1)?;
                    if term != 0x0B {
                        return err(self.offset() - 1, "else outside of if");
                    }
                    if op == 0x02 {
                        Instruction::Block { ty, body }
                    } else {
                        Instruction::Loop { ty, body }
                    }
                }
                0x04 => {
                    let ty = self.block_type()?;
                    let (then_body, term) = self.instructions(depth + 1)?;
                    let else_body = if term == 0x05 {
                        let (body, term) = self.instructions(depth + 1)?;
                        if term != 0x0B {
                            return err(self.offset() - 1, "duplicate else");
                        }
                        body
                    } else {
                        Vec::new()
                    };
                    Instruction::If {
                        ty,
                        then_body,
                        else_body,
                    }
                }
                0x0C => Instruction::Br(self.u32()?),
                0x0D => Instruction::BrIf(self.u32()?),
                0x0E => {
                    let n = self.count()?;
                    let targets = (0..n).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
                    Instruction::BrTable {
                        targets,
                        default: self.u32()?,
                    }
                }
                0x0F => Instruction::Return,
                0x10 => Instruction::Call(self.u32()?),
                0x11 => {
                    let type_index = self.u32()?;
                    self.zero_byte()?;
                    Instruction::CallIndirect { type_index }
                }
                0x1A => Instruction::Drop,
                0x1B => Instruction::Select,
                0x20 => Instruction::LocalGet(self.u32()?),
                0x21 => Instruction::LocalSet(self.u32()?),
                0x22 => Instruction::LocalTee(self.u32()?),
                0x23 => Instruction::GlobalGet(self.u32()?),
                0x24 => Instruction::GlobalSet(self.u32()?),
                0x28..=0x35 => Instruction::Load(LoadOp::from_opcode(op).unwrap(), self.mem_arg()?),
                0x36..=0x3E => {
                    Instruction::Store(StoreOp::from_opcode(op).unwrap(), self.mem_arg()?)
                }
                0x3F => {
                    self.zero_byte()?;
                    Instruction::MemorySize
                }
                0x40 => {
                    self.zero_byte()?;
                    Instruction::MemoryGrow
                }
                0x41 => Instruction::I32Const(self.i32()?),
                0x42 => Instruction::I64Const(self.i64()?),
                0x43 => {
                    let raw = self.take(4)?;
                    Instruction::F32Const(u32::from_le_bytes(raw.try_into().unwrap()))
                }
                0x44 => {
                    let raw = self.take(8)?;
                    Instruction::F64Const(u64::from_le_bytes(raw.try_into().unwrap()))
                }
                _ => match NumOp::from_opcode(op) {
                    Some(num) => Instruction::Numeric(num),
                    None => return err(at, format!("unknown opcode 0x{op:02X}")),
                },
            };
            out.push(instr);
        }
    }

    fn expr(&mut self) -> Result<Vec<Instruction>> {
        let (body, term) = self.instructions(0)?;
        if term != 0x0B {
            return err(self.offset() - 1, "else outside of if");
        }
        Ok(body)
    }

    fn const_expr(&mut self) -> Result<ConstExpr> {
        self.expr().map(ConstExpr)
    }
}

/// Decodes a WebAssembly 1.0 binary.
pub fn decode(bytes: &[u8]) -> Result<Module> {
    let mut r = Reader::new(bytes, 0);
    if r.take(4).ok() != Some(&MAGIC[..]) {
        return err(0, "bad magic number");
    }
    match r.take(4) {
        Ok(v) if v == VERSION => {}
        _ => return err(4, "unsupported version"),
    }

    let mut module = Module::default();
    let mut func_types: Option<Vec<u32>> = None;
    let mut code_seen = false;
    let mut last_id = 0u8;

    while !r.at_end() {
        let section_start = r.offset();
        let id = r.byte()?;
        let size = r.u32()? as usize;
        let body_start = r.offset();
        let content = match r.take(size) {
            Ok(c) => c,
            Err(_) => return err(body_start, "section size exceeds input"),
        };
        if id != 0 {
            if id > SectionId::Data as u8 {
                return err(section_start, format!("unknown section id {id}"));
            }
            if id <= last_id {
                return err(section_start, format!("unexpected section id {id}"));
            }
            last_id = id;
        }
        let mut s = Reader::new(content, body_start);
        match id {
            0 => {
                let name = s.name()?;
                let data = s.take(s.remaining())?.to_vec();
                module.custom_sections.push(CustomSection { name, data });
            }
            1 => {
                let n = s.count()?;
                for _ in 0..n {
                    let at = s.offset();
                    if s.byte()? != 0x60 {
                        return err(at, "invalid function type form");
                    }
                    let np = s.count()?;
                    let params = (0..np).map(|_| s.val_type()).collect::<Result<Vec<_>>>()?;
                    let at = s.offset();
                    let nr = s.count()?;
                    if nr > 1 {
                        return err(at, "multiple results are not supported");
                    }
                    let results = (0..nr).map(|_| s.val_type()).collect::<Result<Vec<_>>>()?;
                    module.types.push(FuncType { params, results });
                }
            }
            2 => {
                let n = s.count()?;
                for _ in 0..n {
                    let module_name = s.name()?;
                    let name = s.name()?;
                    let at = s.offset();
                    let desc = match s.byte()? {
                        0 => ImportDesc::Func(s.u32()?),
                        1 => ImportDesc::Table(s.table_type()?),
                        2 => ImportDesc::Memory(MemType {
                            limits: s.limits()?,
                        }),
                        3 => ImportDesc::Global(s.global_type()?),
                        k => return err(at, format!("invalid import kind 0x{k:02X}")),
                    };
                    module.imports.push(Import {
                        module: module_name,
                        name,
                        desc,
                    });
                }
            }
            3 => {
                let n = s.count()?;
                func_types = Some((0..n).map(|_| s.u32()).collect::<Result<Vec<_>>>()?);
            }
            4 => {
                let n = s.count()?;
                for _ in 0..n {
                    module.tables.push(s.table_type()?);
                }
            }
            5 => {
                let n = s.count()?;
                for _ in 0..n {
                    module.memories.push(MemType {
                        limits: s.limits()?,
                    });
                }
            }
            6 => {
                let n = s.count()?;
                for _ in 0..n {
                    let ty = s.global_type()?;
                    let init = s.const_expr()?;
                    module.globals.push(GlobalDef { ty, init });
                }
            }
            7 => {
                let n = s.count()?;
                for _ in 0..n {
                    let name = s.name()?;
                    let at = s.offset();
                    let kind = s.byte()?;
                    let kind = ExternalKind::from_byte(kind)
                        .map_or_else(|| err(at, format!("invalid export kind 0x{kind:02X}")), Ok)?;
                    let index = s.u32()?;
                    module.exports.push(Export { name, kind, index });
                }
            }
            8 => module.start = Some(s.u32()?),
            9 => {
                let n = s.count()?;
                for _ in 0..n {
                    let table_index = s.u32()?;
                    let offset = s.const_expr()?;
                    let nf = s.count()?;
                    let functions = (0..nf).map(|_| s.u32()).collect::<Result<Vec<_>>>()?;
                    module.elements.push(ElementSegment {
                        table_index,
                        offset,
                        functions,
                    });
                }
            }
            10 => {
                code_seen = true;
                let at = s.offset();
                let n = s.count()?;
                let types = func_types.take().unwrap_or_default();
                if n != types.len() {
                    return err(at, "function and code section have inconsistent lengths");
                }
                for type_index in types {
                    let size = s.u32()? as usize;
                    let entry_start = s.offset();
                    let entry = s.take(size)?;
                    let mut e = Reader::new(entry, entry_start);
                    let groups = e.count()?;
                    let mut locals = Vec::new();
                    let mut total = 0u64;
                    for _ in 0..groups {
                        let at = e.offset();
                        let count = e.u32()?;
                        total += u64::from(count);
                        if total > MAX_LOCALS {
                            return err(at, "too many locals");
                        }
                        let ty = e.val_type()?;
                        locals.extend(std::iter::repeat_n(ty, count as usize));
                    }
                    let body = e.expr()?;
                    if !e.at_end() {
                        return err(e.offset(), "code entry size mismatch");
                    }
                    module.functions.push(FunctionDef {
                        type_index,
                        locals,
                        body,
                    });
                }
            }
            11 => {
                let n = s.count()?;
                for _ in 0..n {
                    let memory_index = s.u32()?;
                    let offset = s.const_expr()?;
                    let len = s.u32()? as usize;
                    let bytes = s.take(len)?.to_vec();
                    module.data.push(DataSegment {
                        memory_index,
                        offset,
                        bytes,
                    });
                }
            }
            _ => unreachable!("section id checked above"),
        }
        if !s.at_end() {
            return err(s.offset(), "section size mismatch");
        }
    }

    if let Some(types) = func_types {
        if !types.is_empty() || code_seen {
            return err(
                bytes.len(),
                "function and code section have inconsistent lengths",
            );
        }
    }
    Ok(module)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_header(sections: &[u8]) -> Vec<u8> {
        let mut v = MAGIC.to_vec();
        v.extend_from_slice(&VERSION);
        v.extend_from_slice(sections);
        v
    }

    #[test]
    fn empty_module() {
        assert_eq!(decode(&with_header(&[])).unwrap(), Module::default());
    }

    #[test]
    fn header_errors() {
        let e = decode(&[0x00, 0x61, 0x73, 0x6D, 0x02, 0x00, 0x00, 0x00]).unwrap_err();
        assert_eq!((e.offset, e.reason.as_str()), (4, "unsupported version"));
        let e = decode(&[0x00, 0x61, 0x73]).unwrap_err();
        assert_eq!((e.offset, e.reason.as_str()), (0, "bad magic number"));
        let e = decode(b"\0asn\x01\0\0\0").unwrap_err();
        assert_eq!(e.offset, 0);
    }

    #[test]
    fn truncated_section() {
        // type section claims 5 bytes, only 2 present
        let e = decode(&with_header(&[0x01, 0x05, 0x01, 0x60])).unwrap_err();
        assert_eq!(e.reason, "section size exceeds input");
    }

    #[test]
    fn section_order_is_enforced() {
        // memory section (5) followed by type section (1)
        let bytes = with_header(&[0x05, 0x03, 0x01, 0x00, 0x01, 0x01, 0x01, 0x00]);
        let e = decode(&bytes).unwrap_err();
        assert_eq!(e.offset, 13);
        assert!(e.reason.contains("unexpected section"), "{e}");
        // duplicate
        let bytes = with_header(&[0x01, 0x01, 0x00, 0x01, 0x01, 0x00]);
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn post_mvp_sections_and_opcodes_are_rejected() {
        // data count section
        let e = decode(&with_header(&[0x0C, 0x01, 0x00])).unwrap_err();
        assert!(e.reason.contains("unknown section id 12"));

        // type ()->(), one function whose body is i32.extend8_s (0xC0)
        let bytes = with_header(&[
            0x01, 0x04, 0x01, 0x60, 0x00, 0x00, // types
            0x03, 0x02, 0x01, 0x00, // functions
            0x0A, 0x06, 0x01, 0x04, 0x00, 0x41, 0x00, 0xC0, // code (truncated end)
        ]);
        let e = decode(&bytes).unwrap_err();
        assert_eq!(e.reason, "unknown opcode 0xC0");
        assert_eq!(e.offset, 25);
    }

    #[test]
    fn malformed_leb_in_section() {
        let bytes = with_header(&[0x08, 0x06, 0x80, 0x80, 0x80, 0x80, 0x80, 0x00]);
        let e = decode(&bytes).unwrap_err();
        assert_eq!(e.reason, "malformed LEB128 integer");
    }

    #[test]
    fn function_without_code_is_rejected() {
        let bytes = with_header(&[0x01, 0x04, 0x01, 0x60, 0x00, 0x00, 0x03, 0x02, 0x01, 0x00]);
        let e = decode(&bytes).unwrap_err();
        assert!(e.reason.contains("inconsistent lengths"));
    }

    #[test]
    fn custom_sections_are_kept_verbatim() {
        let bytes = with_header(&[0x00, 0x06, 0x03, b'f', b'o', b'o', 0xAA, 0xBB]);
        let m = decode(&bytes).unwrap();
        assert_eq!(
            m.custom_sections,
            vec![CustomSection {
                name: "foo".into(),
                data: vec![0xAA, 0xBB]
            }]
        );
    }
}
