use thiserror::Error;

use super::leb;
use super::*;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    /// A vector or payload longer than a u32 length prefix can describe.
    #[error("{what} has {len} entries, more than the binary format can encode")]
    TooLarge { what: &'static str, len: usize },
}

type Result<T> = std::result::Result<T, EncodeError>;

struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn byte(&mut self, b: u8) {
        self.out.push(b);
    }

    fn u32(&mut self, v: u32) {
        leb::write_u32(&mut self.out, v);
    }

    fn len(&mut self, what: &'static str, len: usize) -> Result<()> {
        let v = u32::try_from(len).map_err(|_| EncodeError::TooLarge { what, len })?;
        self.u32(v);
        Ok(())
    }

    fn bytes(&mut self, what: &'static str, b: &[u8]) -> Result<()> {
        self.len(what, b.len())?;
        self.out.extend_from_slice(b);
        Ok(())
    }

    fn name(&mut self, s: &str) -> Result<()> {
        self.bytes("name", s.as_bytes())
    }

    fn limits(&mut self, l: &Limits) {
        match l.max {
            None => {
                self.byte(0x00);
                self.u32(l.min);
            }
            Some(max) => {
                self.byte(0x01);
                self.u32(l.min);
                self.u32(max);
            }
        }
    }

    fn global_type(&mut self, g: &GlobalType) {
        self.byte(g.value_type.to_byte());
        self.byte(g.mutable as u8);
    }

    fn block_type(&mut self, ty: BlockType) {
        match ty {
            BlockType::Empty => self.byte(0x40),
            BlockType::Value(v) => self.byte(v.to_byte()),
        }
    }

    fn mem_arg(&mut self, m: &MemArg) {
        self.u32(m.align);
        self.u32(m.offset);
    }

    fn instructions(&mut self, body: &[Instruction]) -> Result<()> {
        for instr in body {
            self.instruction(instr)?;
        }
        Ok(())
    }

    fn instruction(&mut self, instr: &Instruction) -> Result<()> {
        use Instruction::*;
        match instr {
            Unreachable => self.byte(0x00),
            Nop => self.byte(0x01),
            Block { ty, body } | Loop { ty, body } => {
                self.byte(if matches!(instr, Block { .. }) {
                    0x02
                } else {
                    0x03
                });
                self.block_type(*ty);
                self.instructions(body)?;
                self.byte(0x0B);
            }
            If {
                ty,
                then_body,
                else_body,
            } => {
                self.byte(0x04);
                self.block_type(*ty);
                self.instructions(then_body)?;
                if !else_body.is_empty() {
                    self.byte(0x05);
                    self.instructions(else_body)?;
                }
                self.byte(0x0B);
            }
            Br(l) => {
                self.byte(0x0C);
                self.u32(*l);
            }
            BrIf(l) => {
                self.byte(0x0D);
                self.u32(*l);
            }
            BrTable { targets, default } => {
                self.byte(0x0E);
                self.len("br_table", targets.len())?;
                for t in targets {
                    self.u32(*t);
                }
                self.u32(*default);
            }
            Return => self.byte(0x0F),
            Call(f) => {
                self.byte(0x10);
                self.u32(*f);
            }
            CallIndirect { type_index } => {
                self.byte(0x11);
                self.u32(*type_index);
                self.byte(0x00);
            }
            Drop => self.byte(0x1A),
            Select => self.byte(0x1B),
            LocalGet(i) | LocalSet(i) | LocalTee(i) | GlobalGet(i) | GlobalSet(i) => {
                self.byte(match instr {
                    LocalGet(_) => 0x20,
                    LocalSet(_) => 0x21,
                    LocalTee(_) => 0x22,
                    GlobalGet(_) => 0x23,
                    _ => 0x24,
                });
                self.u32(*i);
            }
            Load(op, m) => {
                self.byte(op.opcode());
                self.mem_arg(m);
            }
            Store(op, m) => {
                self.byte(op.opcode());
                self.mem_arg(m);
            }
            MemorySize => {
                self.byte(0x3F);
                self.byte(0x00);
            }
            MemoryGrow => {
                self.byte(0x40);
                self.byte(0x00);
            }
            I32Const(v) => {
                self.byte(0x41);
                leb::write_i32(&mut self.out, *v);
            }
            I64Const(v) => {
                self.byte(0x42);
                leb::write_i64(&mut self.out, *v);
            }
            F32Const(bits) => {
                self.byte(0x43);
                self.out.extend_from_slice(&bits.to_le_bytes());
            }
            F64Const(bits) => {
                self.byte(0x44);
                self.out.extend_from_slice(&bits.to_le_bytes());
            }
            Numeric(op) => self.byte(op.opcode()),
        }
        Ok(())
    }

    fn expr(&mut self, body: &[Instruction]) -> Result<()> {
        self.instructions(body)?;
        self.byte(0x0B);
        Ok(())
    }
}

fn section(
    out: &mut Vec<u8>,
    id: SectionId,
    fill: impl FnOnce(&mut Writer) -> Result<()>,
) -> Result<()> {
    let mut w = Writer { out: Vec::new() };
    fill(&mut w)?;
    out.push(id as u8);
    let mut header = Writer { out: Vec::new() };
    header.bytes("section", &w.out)?;
    out.extend_from_slice(&header.out);
    Ok(())
}

/// Encodes a function body as it appears inside the code section, without
/// the leading entry size.
pub(crate) fn encode_function_body(f: &FunctionDef) -> Result<Vec<u8>> {
    let mut w = Writer { out: Vec::new() };
    // Run-length compress consecutive locals of the same type.
    let mut groups: Vec<(u32, ValType)> = Vec::new();
    for &ty in &f.locals {
        match groups.last_mut() {
            Some((n, t)) if *t == ty => *n += 1,
            _ => groups.push((1, ty)),
        }
    }
    w.len("locals", groups.len())?;
    for (n, ty) in groups {
        w.u32(n);
        w.byte(ty.to_byte());
    }
    w.expr(&f.body)?;
    Ok(w.out)
}

/// Encodes a module canonically: sections in standard order, empty sections
/// omitted, minimal-length LEB128 everywhere, custom sections last.
pub fn encode(m: &Module) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION);

    if !m.types.is_empty() {
        section(&mut out, SectionId::Type, |w| {
            w.len("type section", m.types.len())?;
            for ty in &m.types {
                w.byte(0x60);
                w.len("params", ty.params.len())?;
                ty.params.iter().for_each(|p| w.byte(p.to_byte()));
                w.len("results", ty.results.len())?;
                ty.results.iter().for_each(|r| w.byte(r.to_byte()));
            }
            Ok(())
        })?;
    }
    if !m.imports.is_empty() {
        section(&mut out, SectionId::Import, |w| {
            w.len("import section", m.imports.len())?;
            for imp in &m.imports {
                w.name(&imp.module)?;
                w.name(&imp.name)?;
                match &imp.desc {
                    ImportDesc::Func(ty) => {
                        w.byte(0x00);
                        w.u32(*ty);
                    }
                    ImportDesc::Table(t) => {
                        w.byte(0x01);
                        w.byte(0x70);
                        w.limits(&t.limits);
                    }
                    ImportDesc::Memory(mem) => {
                        w.byte(0x02);
                        w.limits(&mem.limits);
                    }
                    ImportDesc::Global(g) => {
                        w.byte(0x03);
                        w.global_type(g);
                    }
                }
            }
            Ok(())
        })?;
    }
    if !m.functions.is_empty() {
        section(&mut out, SectionId::Function, |w| {
            w.len("function section", m.functions.len())?;
            m.functions.iter().for_each(|f| w.u32(f.type_index));
            Ok(())
        })?;
    }
    if !m.tables.is_empty() {
        section(&mut out, SectionId::Table, |w| {
            w.len("table section", m.tables.len())?;
            for t in &m.tables {
                w.byte(0x70);
                w.limits(&t.limits);
            }
            Ok(())
        })?;
    }
    if !m.memories.is_empty() {
        section(&mut out, SectionId::Memory, |w| {
            w.len("memory section", m.memories.len())?;
            m.memories.iter().for_each(|mem| w.limits(&mem.limits));
            Ok(())
        })?;
    }
    if !m.globals.is_empty() {
        section(&mut out, SectionId::Global, |w| {
            w.len("global section", m.globals.len())?;
            for g in &m.globals {
                w.global_type(&g.ty);
                w.expr(&g.init.0)?;
            }
            Ok(())
        })?;
    }
    if !m.exports.is_empty() {
        section(&mut out, SectionId::Export, |w| {
            w.len("export section", m.exports.len())?;
            for e in &m.exports {
                w.name(&e.name)?;
                w.byte(e.kind.to_byte());
                w.u32(e.index);
            }
            Ok(())
        })?;
    }
    if let Some(start) = m.start {
        section(&mut out, SectionId::Start, |w| {
            w.u32(start);
            Ok(())
        })?;
    }
    if !m.elements.is_empty() {
        section(&mut out, SectionId::Element, |w| {
            w.len("element section", m.elements.len())?;
            for seg in &m.elements {
                w.u32(seg.table_index);
                w.expr(&seg.offset.0)?;
                w.len("element segment", seg.functions.len())?;
                seg.functions.iter().for_each(|f| w.u32(*f));
            }
            Ok(())
        })?;
    }
    if !m.functions.is_empty() {
        section(&mut out, SectionId::Code, |w| {
            w.len("code section", m.functions.len())?;
            for f in &m.functions {
                let body = encode_function_body(f)?;
                w.bytes("function body", &body)?;
            }
            Ok(())
        })?;
    }
    if !m.data.is_empty() {
        section(&mut out, SectionId::Data, |w| {
            w.len("data section", m.data.len())?;
            for seg in &m.data {
                w.u32(seg.memory_index);
                w.expr(&seg.offset.0)?;
                w.bytes("data segment", &seg.bytes)?;
            }
            Ok(())
        })?;
    }
    for custom in &m.custom_sections {
        section(&mut out, SectionId::Custom, |w| {
            w.name(&custom.name)?;
            w.out.extend_from_slice(&custom.data);
            Ok(())
        })?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_module_is_header_only() {
        assert_eq!(
            encode(&Module::default()).unwrap(),
            [0x00, 0x61, 0x73, 0x6D, 0x01, 0x00, 0x00, 0x00]
        );
    }

    #[test]
    fn unreachable_body_layout() {
        let m = Module {
            types: vec![FuncType::default()],
            functions: vec![FunctionDef {
                type_index: 0,
                locals: vec![],
                body: vec![Instruction::Unreachable],
            }],
            ..Module::default()
        };
        let bytes = encode(&m).unwrap();
        // code section: id, size, count, then the single entry
        let code = [0x0A, 0x05, 0x01, 0x03, 0x00, 0x00, 0x0B];
        assert!(bytes.ends_with(&code), "{bytes:02X?}");
    }

    #[test]
    fn locals_are_run_length_grouped() {
        let f = FunctionDef {
            type_index: 0,
            locals: vec![ValType::I32, ValType::I32, ValType::F64, ValType::I32],
            body: vec![],
        };
        assert_eq!(
            encode_function_body(&f).unwrap(),
            [0x03, 0x02, 0x7F, 0x01, 0x7C, 0x01, 0x7F, 0x0B]
        );
    }

    #[test]
    fn padded_input_is_canonicalized() {
        // start section with a padded LEB128 function index
        let mut bytes = encode(&Module::default()).unwrap();
        bytes.extend_from_slice(&[
            0x01, 0x04, 0x01, 0x60, 0x00, 0x00, // type ()->()
            0x03, 0x02, 0x01, 0x00, // one function
            0x08, 0x02, 0x80, 0x00, // start = 0, padded
            0x0A, 0x04, 0x01, 0x02, 0x00, 0x0B, // code
        ]);
        let m = decode(&bytes).unwrap();
        assert_eq!(m.start, Some(0));
        let canonical = encode(&m).unwrap();
        assert_eq!(canonical.len(), bytes.len() - 1);
        assert_eq!(decode(&canonical).unwrap(), m);
    }
}
