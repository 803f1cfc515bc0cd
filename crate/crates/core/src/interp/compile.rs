//! Lowers structured function bodies into a flat op array with resolved
//! jump targets.

use crate::wasm::{Instruction, LoadOp, NumOp, StoreOp};

use super::Value;

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Unreachable,
    Nop,
    /// Pushes a label whose branch target is `end` (just past the matching `End`).
    Block {
        arity: u32,
        end: u32,
    },
    /// Pushes a label whose branch target is this op itself.
    Loop,
    /// Pops the condition and pushes a label targeting `end`; on zero jumps to `else_pc`.
    If {
        arity: u32,
        else_pc: u32,
        end: u32,
    },
    /// End of a `then` arm: jumps to the `End` op of the enclosing `if`.
    Else {
        end_op: u32,
    },
    /// Pops the innermost label.
    End,
    Br(u32),
    BrIf(u32),
    BrTable(Box<[u32]>, u32),
    Return,
    Call(u32),
    CallIndirect(u32),
    Drop,
    Select,
    LocalGet(u32),
    LocalSet(u32),
    LocalTee(u32),
    GlobalGet(u32),
    GlobalSet(u32),
    Load(LoadOp, u32),
    Store(StoreOp, u32),
    MemorySize,
    MemoryGrow,
    Const(Value),
    Num(NumOp),
}

/// Compiles a function body. The result ends with `End` (closing the
/// function-level label) followed by `Return`; the function label targets
/// that final `Return`.
pub(crate) fn compile_body(body: &[Instruction]) -> Vec<Op> {
    let mut out = Vec::new();
    compile_seq(body, &mut out);
    out.push(Op::End);
    out.push(Op::Return);
    out
}

fn pos(out: &[Op]) -> u32 {
    out.len() as u32
}

fn compile_seq(body: &[Instruction], out: &mut Vec<Op>) {
    for instr in body {
        let op = match instr {
            Instruction::Block { ty, body } => {
                let at = out.len();
                out.push(Op::Block {
                    arity: ty.arity() as u32,
                    end: 0,
                });
                compile_seq(body, out);
                out.push(Op::End);
                let end = pos(out);
                if let Op::Block { end: e, .. } = &mut out[at] {
                    *e = end;
                }
                continue;
            }
            Instruction::Loop { body, .. } => {
                out.push(Op::Loop);
                compile_seq(body, out);
                Op::End
            }
            Instruction::If {
                ty,
                then_body,
                else_body,
            } => {
                let at = out.len();
                out.push(Op::If {
                    arity: ty.arity() as u32,
                    else_pc: 0,
                    end: 0,
                });
                compile_seq(then_body, out);
                let (else_pc, end_op) = if else_body.is_empty() {
                    (pos(out), pos(out))
                } else {
                    let else_at = out.len();
                    out.push(Op::Else { end_op: 0 });
                    let else_pc = pos(out);
                    compile_seq(else_body, out);
                    let end_op = pos(out);
                    out[else_at] = Op::Else { end_op };
                    (else_pc, end_op)
                };
                out.push(Op::End);
                if let Op::If {
                    else_pc: e, end: n, ..
                } = &mut out[at]
                {
                    *e = else_pc;
                    *n = end_op + 1;
                }
                continue;
            }
            Instruction::Unreachable => Op::Unreachable,
            Instruction::Nop => Op::Nop,
            Instruction::Br(l) => Op::Br(*l),
            Instruction::BrIf(l) => Op::BrIf(*l),
            Instruction::BrTable { targets, default } => {
                Op::BrTable(targets.clone().into_boxed_slice(), *default)
            }
            Instruction::Return => Op::Return,
            Instruction::Call(f) => Op::Call(*f),
            Instruction::CallIndirect { type_index } => Op::CallIndirect(*type_index),
            Instruction::Drop => Op::Drop,
            Instruction::Select => Op::Select,
            Instruction::LocalGet(i) => Op::LocalGet(*i),
            Instruction::LocalSet(i) => Op::LocalSet(*i),
            Instruction::LocalTee(i) => Op::LocalTee(*i),
            Instruction::GlobalGet(i) => Op::GlobalGet(*i),
            Instruction::GlobalSet(i) => Op::GlobalSet(*i),
            Instruction::Load(op, arg) => Op::Load(*op, arg.offset),
            Instruction::Store(op, arg) => Op::Store(*op, arg.offset),
            Instruction::MemorySize => Op::MemorySize,
            Instruction::MemoryGrow => Op::MemoryGrow,
            Instruction::I32Const(v) => Op::Const(Value::I32(*v)),
            Instruction::I64Const(v) => Op::Const(Value::I64(*v)),
            Instruction::F32Const(bits) => Op::Const(Value::F32(f32::from_bits(*bits))),
            Instruction::F64Const(bits) => Op::Const(Value::F64(f64::from_bits(*bits))),
            Instruction::Numeric(op) => Op::Num(*op),
        };
        out.push(op);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wasm::{BlockType, ValType};

    #[test]
    fn if_else_targets() {
        let body = vec![
            Instruction::I32Const(1),
            Instruction::If {
                ty: BlockType::Value(ValType::I32),
                then_body: vec![Instruction::I32Const(2)],
                else_body: vec![Instruction::I32Const(3)],
            },
            Instruction::Drop,
        ];
        let ops = compile_body(&body);
        // 0 const, 1 if, 2 const2, 3 else, 4 const3, 5 end, 6 drop, 7 end, 8 return
        assert!(matches!(
            ops[1],
            Op::If {
                arity: 1,
                else_pc: 4,
                end: 6
            }
        ));
        assert!(matches!(ops[3], Op::Else { end_op: 5 }));
        assert!(matches!(ops[5], Op::End));
        assert_eq!(ops.len(), 9);
    }

    #[test]
    fn block_targets_skip_end() {
        let body = vec![Instruction::Block {
            ty: BlockType::Empty,
            body: vec![Instruction::Br(0)],
        }];
        let ops = compile_body(&body);
        assert!(matches!(ops[0], Op::Block { arity: 0, end: 3 }));
        assert!(matches!(ops[2], Op::End));
    }
}
