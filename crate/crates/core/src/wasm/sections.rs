use std::collections::BTreeMap;

use super::decode::{decode, DecodeError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum SectionId {
    Custom = 0,
    Type = 1,
    Import = 2,
    Function = 3,
    Table = 4,
    Memory = 5,
    Global = 6,
    Export = 7,
    Start = 8,
    Element = 9,
    Code = 10,
    Data = 11,
}

impl SectionId {
    pub fn from_u8(id: u8) -> Option<SectionId> {
        use SectionId::*;
        Some(match id {
            0 => Custom,
            1 => Type,
            2 => Import,
            3 => Function,
            4 => Table,
            5 => Memory,
            6 => Global,
            7 => Export,
            8 => Start,
            9 => Element,
            10 => Code,
            11 => Data,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        use SectionId::*;
        match self {
            Custom => "custom",
            Type => "type",
            Import => "import",
            Function => "function",
            Table => "table",
            Memory => "memory",
            Global => "global",
            Export => "export",
            Start => "start",
            Element => "element",
            Code => "code",
            Data => "data",
        }
    }
}

/// Encoded size of each section kind present in a binary, including the
/// section id byte and size prefix. Custom sections are summed under
/// [`SectionId::Custom`].
pub type SectionSizes = BTreeMap<SectionId, usize>;

/// Splits a binary into its sections and reports their sizes. The sizes of
/// all sections plus the 8-byte header add up to the input length.
pub fn section_sizes(bytes: &[u8]) -> Result<SectionSizes, DecodeError> {
    // Full decode first so that only well-formed binaries are measured.
    decode(bytes)?;
    let mut sizes = SectionSizes::new();
    let mut pos = 8;
    while pos < bytes.len() {
        let start = pos;
        let id = SectionId::from_u8(bytes[pos]).expect("validated by decode");
        pos += 1;
        let (size, n) = super::leb::read_u32(&bytes[pos..]).expect("validated by decode");
        pos += n + size as usize;
        *sizes.entry(id).or_default() += pos - start;
    }
    Ok(sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wasm::{encode, ConstExpr, DataSegment, Limits, MemType, Module};

    #[test]
    fn empty_module_has_no_sections() {
        let bytes = encode(&Module::default()).unwrap();
        assert!(section_sizes(&bytes).unwrap().is_empty());
    }

    #[test]
    fn data_section_contains_segment() {
        let m = Module {
            memories: vec![MemType {
                limits: Limits { min: 1, max: None },
            }],
            data: vec![DataSegment {
                memory_index: 0,
                offset: ConstExpr::i32(0),
                bytes: vec![7; 100],
            }],
            ..Module::default()
        };
        let bytes = encode(&m).unwrap();
        let sizes = section_sizes(&bytes).unwrap();
        assert!(sizes[&SectionId::Data] >= 100);
        assert_eq!(sizes.values().sum::<usize>() + 8, bytes.len());
    }

    #[test]
    fn malformed_input_propagates() {
        assert!(section_sizes(&[0, 1, 2]).is_err());
    }
}
