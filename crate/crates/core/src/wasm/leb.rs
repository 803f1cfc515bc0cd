//! LEB128 encoding as used by the WebAssembly binary format.

/// Why a LEB128 read failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LebError {
    Truncated,
    /// Too many bytes, or set bits beyond the integer's width.
    Overflow,
}

/// Reads an unsigned LEB128 of at most `bits` significant bits. Returns the
/// value and the number of bytes consumed.
fn read_unsigned(bytes: &[u8], bits: u32) -> Result<(u64, usize), LebError> {
    let max_len = bits.div_ceil(7) as usize;
    let mut result: u64 = 0;
    let mut shift = 0u32;
    for i in 0..max_len {
        let byte = *bytes.get(i).ok_or(LebError::Truncated)?;
        let payload = u64::from(byte & 0x7F);
        if i == max_len - 1 {
            // Bits of the final group that fall outside the target width must be zero.
            let used = bits - shift;
            if used < 7 && (payload >> used) != 0 {
                return Err(LebError::Overflow);
            }
        }
        result |= payload << shift;
        if byte & 0x80 == 0 {
            return Ok((result, i + 1));
        }
        shift += 7;
    }
    Err(LebError::Overflow)
}

fn read_signed(bytes: &[u8], bits: u32) -> Result<(i64, usize), LebError> {
    let max_len = bits.div_ceil(7) as usize;
    let mut result: i64 = 0;
    let mut shift = 0u32;
    for i in 0..max_len {
        let byte = *bytes.get(i).ok_or(LebError::Truncated)?;
        let payload = i64::from(byte & 0x7F);
        if i == max_len - 1 {
            // The unused high bits of the last group must replicate the sign bit.
            let used = bits - shift;
            if used < 7 {
                let rest = (byte & 0x7F) >> (used - 1);
                let all_ones = 0x7F >> (used - 1);
                if rest != 0 && rest != all_ones {
                    return Err(LebError::Overflow);
                }
            }
        }
        result |= payload << shift;
        shift += 7;
        if byte & 0x80 == 0 {
            if shift < 64 && byte & 0x40 != 0 {
                result |= -1i64 << shift;
            }
            return Ok((result, i + 1));
        }
    }
    Err(LebError::Overflow)
}

pub(crate) fn read_u32(bytes: &[u8]) -> Result<(u32, usize), LebError> {
    read_unsigned(bytes, 32).map(|(v, n)| (v as u32, n))
}

pub(crate) fn read_i32(bytes: &[u8]) -> Result<(i32, usize), LebError> {
    read_signed(bytes, 32).map(|(v, n)| (v as i32, n))
}

pub(crate) fn read_i64(bytes: &[u8]) -> Result<(i64, usize), LebError> {
    read_signed(bytes, 64)
}

pub(crate) fn write_u32(out: &mut Vec<u8>, mut value: u32) {
    loop {
        let byte = (value & 0x7F) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub(crate) fn write_i64(out: &mut Vec<u8>, mut value: i64) {
    loop {
        let byte = (value & 0x7F) as u8;
        value >>= 7;
        let done = (value == 0 && byte & 0x40 == 0) || (value == -1 && byte & 0x40 != 0);
        if done {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub(crate) fn write_i32(out: &mut Vec<u8>, value: i32) {
    write_i64(out, i64::from(value));
}
