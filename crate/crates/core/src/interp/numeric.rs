//! Semantics of the numeric instructions.

use crate::wasm::NumOp;

use super::{TrapKind, Value};

const CANONICAL_NAN32: u32 = 0x7FC0_0000;
const CANONICAL_NAN64: u64 = 0x7FF8_0000_0000_0000;

fn canon32(x: f32) -> f32 {
    if x.is_nan() {
        f32::from_bits(CANONICAL_NAN32)
    } else {
        x
    }
}

fn canon64(x: f64) -> f64 {
    if x.is_nan() {
        f64::from_bits(CANONICAL_NAN64)
    } else {
        x
    }
}

macro_rules! float_min_max {
    ($min:ident, $max:ident, $t:ty, $canon:ident) => {
        fn $min(a: $t, b: $t) -> $t {
            if a.is_nan() || b.is_nan() {
                $canon(<$t>::NAN)
            } else if a == b {
                // -0 and +0 compare equal; min prefers the negative zero.
                <$t>::from_bits(a.to_bits() | b.to_bits())
            } else {
                a.min(b)
            }
        }

        fn $max(a: $t, b: $t) -> $t {
            if a.is_nan() || b.is_nan() {
                $canon(<$t>::NAN)
            } else if a == b {
                <$t>::from_bits(a.to_bits() & b.to_bits())
            } else {
                a.max(b)
            }
        }
    };
}

float_min_max!(fmin32, fmax32, f32, canon32);
float_min_max!(fmin64, fmax64, f64, canon64);

/// Truncates toward zero and checks that the result lies in
/// `[lo, hi_exclusive)`. NaN and out-of-range inputs are `integer-overflow`.
fn trunc_checked(x: f64, lo: f64, hi_exclusive: f64) -> Result<f64, TrapKind> {
    if x.is_nan() {
        return Err(TrapKind::IntegerOverflow);
    }
    let t = x.trunc();
    if t >= lo && t < hi_exclusive {
        Ok(t)
    } else {
        Err(TrapKind::IntegerOverflow)
    }
}

const TWO_31: f64 = 2147483648.0;
const TWO_32: f64 = 4294967296.0;
const TWO_63: f64 = 9223372036854775808.0;
const TWO_64: f64 = 18446744073709551616.0;

fn i32_trunc_s(x: f64) -> Result<Value, TrapKind> {
    trunc_checked(x, -TWO_31, TWO_31).map(|t| Value::I32(t as i32))
}

fn i32_trunc_u(x: f64) -> Result<Value, TrapKind> {
    trunc_checked(x, 0.0, TWO_32).map(|t| Value::I32(t as u32 as i32))
}

fn i64_trunc_s(x: f64) -> Result<Value, TrapKind> {
    trunc_checked(x, -TWO_63, TWO_63).map(|t| Value::I64(t as i64))
}

fn i64_trunc_u(x: f64) -> Result<Value, TrapKind> {
    trunc_checked(x, 0.0, TWO_64).map(|t| Value::I64(t as u64 as i64))
}

fn bool_val(b: bool) -> Value {
    Value::I32(b as i32)
}

fn i32_div_s(a: i32, b: i32) -> Result<i32, TrapKind> {
    match (a, b) {
        (_, 0) => Err(TrapKind::DivideByZero),
        (i32::MIN, -1) => Err(TrapKind::IntegerOverflow),
        _ => Ok(a.wrapping_div(b)),
    }
}

fn i64_div_s(a: i64, b: i64) -> Result<i64, TrapKind> {
    match (a, b) {
        (_, 0) => Err(TrapKind::DivideByZero),
        (i64::MIN, -1) => Err(TrapKind::IntegerOverflow),
        _ => Ok(a.wrapping_div(b)),
    }
}

fn nonzero<T: PartialEq + Default>(b: T) -> Result<T, TrapKind> {
    if b == T::default() {
        Err(TrapKind::DivideByZero)
    } else {
        Ok(b)
    }
}

/// Applies `op` to its operands (in stack order, first pushed first).
/// Operand types are guaranteed by validation.
pub(crate) fn eval(op: NumOp, args: &[Value]) -> Result<Value, TrapKind> {
    use NumOp::*;
    use Value::{F32, F64, I32, I64};

    macro_rules! un {
        ($pat:ident, $x:ident => $e:expr) => {
            match args {
                [$pat($x)] => {
                    let $x = *$x;
                    $e
                }
                _ => unreachable!("{} operand types", op.name()),
            }
        };
    }
    macro_rules! bin {
        ($pat:ident, $a:ident, $b:ident => $e:expr) => {
            match args {
                [$pat($a), $pat($b)] => {
                    let ($a, $b) = (*$a, *$b);
                    $e
                }
                _ => unreachable!("{} operand types", op.name()),
            }
        };
    }

    Ok(match op {
        I32Eqz => un!(I32, a => bool_val(a == 0)),
        I32Eq => bin!(I32, a, b => bool_val(a == b)),
        I32Ne => bin!(I32, a, b => bool_val(a != b)),
        I32LtS => bin!(I32, a, b => bool_val(a < b)),
        I32LtU => bin!(I32, a, b => bool_val((a as u32) < (b as u32))),
        I32GtS => bin!(I32, a, b => bool_val(a > b)),
        I32GtU => bin!(I32, a, b => bool_val((a as u32) > (b as u32))),
        I32LeS => bin!(I32, a, b => bool_val(a <= b)),
        I32LeU => bin!(I32, a, b => bool_val((a as u32) <= (b as u32))),
        I32GeS => bin!(I32, a, b => bool_val(a >= b)),
        I32GeU => bin!(I32, a, b => bool_val((a as u32) >= (b as u32))),
        I64Eqz => un!(I64, a => bool_val(a == 0)),
        I64Eq => bin!(I64, a, b => bool_val(a == b)),
        I64Ne => bin!(I64, a, b => bool_val(a != b)),
        I64LtS => bin!(I64, a, b => bool_val(a < b)),
        I64LtU => bin!(I64, a, b => bool_val((a as u64) < (b as u64))),
        I64GtS => bin!(I64, a, b => bool_val(a > b)),
        I64GtU => bin!(I64, a, b => bool_val((a as u64) > (b as u64))),
        I64LeS => bin!(I64, a, b => bool_val(a <= b)),
        I64LeU => bin!(I64, a, b => bool_val((a as u64) <= (b as u64))),
        I64GeS => bin!(I64, a, b => bool_val(a >= b)),
        I64GeU => bin!(I64, a, b => bool_val((a as u64) >= (b as u64))),
        F32Eq => bin!(F32, a, b => bool_val(a == b)),
        F32Ne => bin!(F32, a, b => bool_val(a != b)),
        F32Lt => bin!(F32, a, b => bool_val(a < b)),
        F32Gt => bin!(F32, a, b => bool_val(a > b)),
        F32Le => bin!(F32, a, b => bool_val(a <= b)),
        F32Ge => bin!(F32, a, b => bool_val(a >= b)),
        F64Eq => bin!(F64, a, b => bool_val(a == b)),
        F64Ne => bin!(F64, a, b => bool_val(a != b)),
        F64Lt => bin!(F64, a, b => bool_val(a < b)),
        F64Gt => bin!(F64, a, b => bool_val(a > b)),
        F64Le => bin!(F64, a, b => bool_val(a <= b)),
        F64Ge => bin!(F64, a, b => bool_val(a >= b)),

        I32Clz => un!(I32, a => I32(a.leading_zeros() as i32)),
        I32Ctz => un!(I32, a => I32(a.trailing_zeros() as i32)),
        I32Popcnt => un!(I32, a => I32(a.count_ones() as i32)),
        I32Add => bin!(I32, a, b => I32(a.wrapping_add(b))),
        I32Sub => bin!(I32, a, b => I32(a.wrapping_sub(b))),
        I32Mul => bin!(I32, a, b => I32(a.wrapping_mul(b))),
        I32DivS => bin!(I32, a, b => I32(i32_div_s(a, b)?)),
        I32DivU => bin!(I32, a, b => I32(((a as u32) / nonzero(b as u32)?) as i32)),
        I32RemS => bin!(I32, a, b => I32(a.wrapping_rem(nonzero(b)?))),
        I32RemU => bin!(I32, a, b => I32(((a as u32) % nonzero(b as u32)?) as i32)),
        I32And => bin!(I32, a, b => I32(a & b)),
        I32Or => bin!(I32, a, b => I32(a | b)),
        I32Xor => bin!(I32, a, b => I32(a ^ b)),
        I32Shl => bin!(I32, a, b => I32(a.wrapping_shl(b as u32))),
        I32ShrS => bin!(I32, a, b => I32(a.wrapping_shr(b as u32))),
        I32ShrU => bin!(I32, a, b => I32((a as u32).wrapping_shr(b as u32) as i32)),
        I32Rotl => bin!(I32, a, b => I32((a as u32).rotate_left(b as u32 & 31) as i32)),
        I32Rotr => bin!(I32, a, b => I32((a as u32).rotate_right(b as u32 & 31) as i32)),

        I64Clz => un!(I64, a => I64(i64::from(a.leading_zeros()))),
        I64Ctz => un!(I64, a => I64(i64::from(a.trailing_zeros()))),
        I64Popcnt => un!(I64, a => I64(i64::from(a.count_ones()))),
        I64Add => bin!(I64, a, b => I64(a.wrapping_add(b))),
        I64Sub => bin!(I64, a, b => I64(a.wrapping_sub(b))),
        I64Mul => bin!(I64, a, b => I64(a.wrapping_mul(b))),
        I64DivS => bin!(I64, a, b => I64(i64_div_s(a, b)?)),
        I64DivU => bin!(I64, a, b => I64(((a as u64) / nonzero(b as u64)?) as i64)),
        I64RemS => bin!(I64, a, b => I64(a.wrapping_rem(nonzero(b)?))),
        I64RemU => bin!(I64, a, b => I64(((a as u64) % nonzero(b as u64)?) as i64)),
        I64And => bin!(I64, a, b => I64(a & b)),
        I64Or => bin!(I64, a, b => I64(a | b)),
        I64Xor => bin!(I64, a, b => I64(a ^ b)),
        I64Shl => bin!(I64, a, b => I64(a.wrapping_shl(b as u32))),
        I64ShrS => bin!(I64, a, b => I64(a.wrapping_shr(b as u32))),
        I64ShrU => bin!(I64, a, b => I64((a as u64).wrapping_shr(b as u32) as i64)),
        I64Rotl => bin!(I64, a, b => I64((a as u64).rotate_left((b & 63) as u32) as i64)),
        I64Rotr => bin!(I64, a, b => I64((a as u64).rotate_right((b & 63) as u32) as i64)),

        F32Abs => un!(F32, a => F32(f32::from_bits(a.to_bits() & 0x7FFF_FFFF))),
        F32Neg => un!(F32, a => F32(f32::from_bits(a.to_bits() ^ 0x8000_0000))),
        F32Ceil => un!(F32, a => F32(canon32(a.ceil()))),
        F32Floor => un!(F32, a => F32(canon32(a.floor()))),
        F32Trunc => un!(F32, a => F32(canon32(a.trunc()))),
        F32Nearest => un!(F32, a => F32(canon32(a.round_ties_even()))),
        F32Sqrt => un!(F32, a => F32(canon32(a.sqrt()))),
        F32Add => bin!(F32, a, b => F32(canon32(a + b))),
        F32Sub => bin!(F32, a, b => F32(canon32(a - b))),
        F32Mul => bin!(F32, a, b => F32(canon32(a * b))),
        F32Div => bin!(F32, a, b => F32(canon32(a / b))),
        F32Min => bin!(F32, a, b => F32(fmin32(a, b))),
        F32Max => bin!(F32, a, b => F32(fmax32(a, b))),
        F32Copysign => bin!(F32, a, b => F32(f32::from_bits(
            (a.to_bits() & 0x7FFF_FFFF) | (b.to_bits() & 0x8000_0000)
        ))),

        F64Abs => un!(F64, a => F64(f64::from_bits(a.to_bits() & !(1 << 63)))),
        F64Neg => un!(F64, a => F64(f64::from_bits(a.to_bits() ^ (1 << 63)))),
        F64Ceil => un!(F64, a => F64(canon64(a.ceil()))),
        F64Floor => un!(F64, a => F64(canon64(a.floor()))),
        F64Trunc => un!(F64, a => F64(canon64(a.trunc()))),
        F64Nearest => un!(F64, a => F64(canon64(a.round_ties_even()))),
        F64Sqrt => un!(F64, a => F64(canon64(a.sqrt()))),
        F64Add => bin!(F64, a, b => F64(canon64(a + b))),
        F64Sub => bin!(F64, a, b => F64(canon64(a - b))),
        F64Mul => bin!(F64, a, b => F64(canon64(a * b))),
        F64Div => bin!(F64, a, b => F64(canon64(a / b))),
        F64Min => bin!(F64, a, b => F64(fmin64(a, b))),
        F64Max => bin!(F64, a, b => F64(fmax64(a, b))),
        F64Copysign => bin!(F64, a, b => F64(f64::from_bits(
            (a.to_bits() & !(1 << 63)) | (b.to_bits() & (1 << 63))
        ))),

        I32WrapI64 => un!(I64, a => I32(a as i32)),
        I32TruncF32S => un!(F32, a => i32_trunc_s(f64::from(a))?),
        I32TruncF32U => un!(F32, a => i32_trunc_u(f64::from(a))?),
        I32TruncF64S => un!(F64, a => i32_trunc_s(a)?),
        I32TruncF64U => un!(F64, a => i32_trunc_u(a)?),
        I64ExtendI32S => un!(I32, a => I64(i64::from(a))),
        I64ExtendI32U => un!(I32, a => I64(i64::from(a as u32))),
        I64TruncF32S => un!(F32, a => i64_trunc_s(f64::from(a))?),
        I64TruncF32U => un!(F32, a => i64_trunc_u(f64::from(a))?),
        I64TruncF64S => un!(F64, a => i64_trunc_s(a)?),
        I64TruncF64U => un!(F64, a => i64_trunc_u(a)?),
        F32ConvertI32S => un!(I32, a => F32(a as f32)),
        F32ConvertI32U => un!(I32, a => F32(a as u32 as f32)),
        F32ConvertI64S => un!(I64, a => F32(a as f32)),
        F32ConvertI64U => un!(I64, a => F32(a as u64 as f32)),
        F32DemoteF64 => un!(F64, a => F32(canon32(a as f32))),
        F64ConvertI32S => un!(I32, a => F64(f64::from(a))),
        F64ConvertI32U => un!(I32, a => F64(f64::from(a as u32))),
        F64ConvertI64S => un!(I64, a => F64(a as f64)),
        F64ConvertI64U => un!(I64, a => F64(a as u64 as f64)),
        F64PromoteF32 => un!(F32, a => F64(canon64(f64::from(a)))),
        I32ReinterpretF32 => un!(F32, a => I32(a.to_bits() as i32)),
        I64ReinterpretF64 => un!(F64, a => I64(a.to_bits() as i64)),
        F32ReinterpretI32 => un!(I32, a => F32(f32::from_bits(a as u32))),
        F64ReinterpretI64 => un!(I64, a => F64(f64::from_bits(a as u64))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Value::*;

    fn ok(op: NumOp, args: &[Value]) -> Value {
        eval(op, args).unwrap()
    }

    #[test]
    fn integer_traps() {
        assert_eq!(
            eval(NumOp::I32DivS, &[I32(1), I32(0)]),
            Err(TrapKind::DivideByZero)
        );
        assert_eq!(
            eval(NumOp::I32DivS, &[I32(i32::MIN), I32(-1)]),
            Err(TrapKind::IntegerOverflow)
        );
        assert_eq!(ok(NumOp::I32RemS, &[I32(i32::MIN), I32(-1)]), I32(0));
        assert_eq!(
            eval(NumOp::I64RemU, &[I64(5), I64(0)]),
            Err(TrapKind::DivideByZero)
        );
        assert_eq!(
            eval(NumOp::I64DivS, &[I64(i64::MIN), I64(-1)]),
            Err(TrapKind::IntegerOverflow)
        );
        assert_eq!(ok(NumOp::I32DivU, &[I32(-1), I32(2)]), I32(0x7FFF_FFFF));
        assert_eq!(ok(NumOp::I32DivS, &[I32(-7), I32(2)]), I32(-3));
        assert_eq!(ok(NumOp::I32RemS, &[I32(-7), I32(2)]), I32(-1));
    }

    #[test]
    fn shifts_and_rotations_mask_their_count() {
        assert_eq!(ok(NumOp::I32Shl, &[I32(1), I32(33)]), I32(2));
        assert_eq!(ok(NumOp::I32ShrS, &[I32(-8), I32(1)]), I32(-4));
        assert_eq!(ok(NumOp::I32ShrU, &[I32(-8), I32(1)]), I32(0x7FFF_FFFC));
        assert_eq!(
            ok(NumOp::I32Rotl, &[I32(0x8000_0001u32 as i32), I32(1)]),
            I32(3)
        );
        assert_eq!(ok(NumOp::I64Rotr, &[I64(1), I64(65)]), I64(i64::MIN));
        assert_eq!(ok(NumOp::I64Clz, &[I64(1)]), I64(63));
        assert_eq!(ok(NumOp::I32Ctz, &[I32(0)]), I32(32));
    }

    #[test]
    fn float_min_max_signed_zero_and_nan() {
        assert_eq!(ok(NumOp::F32Min, &[F32(0.0), F32(-0.0)]), F32(-0.0));
        assert_eq!(ok(NumOp::F64Max, &[F64(-0.0), F64(0.0)]), F64(0.0));
        let nan = ok(NumOp::F32Min, &[F32(f32::NAN), F32(1.0)]);
        assert_eq!(nan, F32(f32::from_bits(CANONICAL_NAN32)));
    }

    #[test]
    fn arithmetic_nans_are_canonical() {
        let weird = f64::from_bits(0xFFF0_0000_0000_0001);
        assert_eq!(
            ok(NumOp::F64Add, &[F64(weird), F64(1.0)]),
            F64(f64::from_bits(CANONICAL_NAN64))
        );
        // sign operations are bitwise and keep the payload
        assert_eq!(
            ok(NumOp::F64Neg, &[F64(weird)]),
            F64(f64::from_bits(0x7FF0_0000_0000_0001))
        );
        assert_eq!(
            ok(NumOp::F32Sqrt, &[F32(-1.0)]),
            F32(f32::from_bits(CANONICAL_NAN32))
        );
    }

    #[test]
    fn nearest_rounds_half_to_even() {
        assert_eq!(ok(NumOp::F32Nearest, &[F32(2.5)]), F32(2.0));
        assert_eq!(ok(NumOp::F64Nearest, &[F64(-3.5)]), F64(-4.0));
        assert_eq!(ok(NumOp::F64Nearest, &[F64(-0.4)]), F64(-0.0));
    }

    #[test]
    fn truncation_bounds() {
        assert_eq!(
            ok(NumOp::I32TruncF64S, &[F64(-2147483648.9)]),
            I32(i32::MIN)
        );
        assert_eq!(
            eval(NumOp::I32TruncF64S, &[F64(-2147483649.0)]),
            Err(TrapKind::IntegerOverflow)
        );
        assert_eq!(
            eval(NumOp::I32TruncF32S, &[F32(2147483648.0)]),
            Err(TrapKind::IntegerOverflow)
        );
        assert_eq!(ok(NumOp::I32TruncF64U, &[F64(-0.9)]), I32(0));
        assert_eq!(ok(NumOp::I32TruncF64U, &[F64(4294967295.5)]), I32(-1));
        assert_eq!(
            eval(NumOp::I64TruncF64U, &[F64(f64::NAN)]),
            Err(TrapKind::IntegerOverflow)
        );
        assert_eq!(
            ok(NumOp::I64TruncF64S, &[F64(-9223372036854775808.0)]),
            I64(i64::MIN)
        );
        assert_eq!(
            eval(NumOp::I64TruncF32S, &[F32(9223372036854775808.0)]),
            Err(TrapKind::IntegerOverflow)
        );
        assert_eq!(
            ok(NumOp::I64TruncF64U, &[F64(18446744073709549568.0)]),
            I64(-2048)
        );
    }

    #[test]
    fn conversions() {
        assert_eq!(ok(NumOp::F32ConvertI32U, &[I32(-1)]), F32(4294967296.0));
        assert_eq!(
            ok(NumOp::F64ConvertI64U, &[I64(-1)]),
            F64(18446744073709551616.0)
        );
        // round-to-nearest-even on the 2^24 boundary
        assert_eq!(ok(NumOp::F32ConvertI32S, &[I32(16777217)]), F32(16777216.0));
        assert_eq!(ok(NumOp::I64ExtendI32U, &[I32(-1)]), I64(0xFFFF_FFFF));
        assert_eq!(ok(NumOp::I32WrapI64, &[I64(0x1_0000_0005)]), I32(5));
        assert_eq!(ok(NumOp::I32ReinterpretF32, &[F32(-0.0)]), I32(i32::MIN));
    }
}
