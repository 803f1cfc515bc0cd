//! The `name` custom section: module, function and local names.

use super::leb;

pub const SECTION_NAME: &str = "name";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NameSection {
    pub module: Option<String>,
    /// `(function index, name)`, sorted by index.
    pub functions: Vec<(u32, String)>,
    /// `(function index, [(local index, name)])`, sorted by function index.
    pub locals: Vec<(u32, Vec<(u32, String)>)>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Option<u32> {
        let (v, n) = leb::read_u32(self.bytes.get(self.pos..)?).ok()?;
        self.pos += n;
        Some(v)
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn name(&mut self) -> Option<String> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).ok().map(str::to_owned)
    }

    fn name_map(&mut self) -> Option<Vec<(u32, String)>> {
        let n = self.u32()?;
        let mut out = Vec::new();
        for _ in 0..n {
            out.push((self.u32()?, self.name()?));
        }
        Some(out)
    }
}

impl NameSection {
    /// Parses the payload of a `name` custom section. Subsections other than
    /// module, function and local names are skipped. Returns `None` when the
    /// payload is malformed.
    pub fn parse(data: &[u8]) -> Option<NameSection> {
        let mut c = Cursor {
            bytes: data,
            pos: 0,
        };
        let mut names = NameSection::default();
        while c.pos < data.len() {
            let id = *c.take(1)?.first()?;
            let len = c.u32()? as usize;
            let payload = c.take(len)?;
            let mut s = Cursor {
                bytes: payload,
                pos: 0,
            };
            match id {
                0 => names.module = Some(s.name()?),
                1 => names.functions = s.name_map()?,
                2 => {
                    let n = s.u32()?;
                    for _ in 0..n {
                        let func = s.u32()?;
                        names.locals.push((func, s.name_map()?));
                    }
                }
                _ => continue,
            }
            if s.pos != payload.len() {
                return None;
            }
        }
        Some(names)
    }

    pub fn encode(&self) -> Vec<u8> {
        fn name(out: &mut Vec<u8>, s: &str) {
            leb::write_u32(out, s.len() as u32);
            out.extend_from_slice(s.as_bytes());
        }
        fn name_map(out: &mut Vec<u8>, map: &[(u32, String)]) {
            leb::write_u32(out, map.len() as u32);
            for (i, n) in map {
                leb::write_u32(out, *i);
                name(out, n);
            }
        }
        fn subsection(out: &mut Vec<u8>, id: u8, payload: Vec<u8>) {
            out.push(id);
            leb::write_u32(out, payload.len() as u32);
            out.extend_from_slice(&payload);
        }

        let mut out = Vec::new();
        if let Some(module) = &self.module {
            let mut p = Vec::new();
            name(&mut p, module);
            subsection(&mut out, 0, p);
        }
        if !self.functions.is_empty() {
            let mut p = Vec::new();
            name_map(&mut p, &self.functions);
            subsection(&mut out, 1, p);
        }
        if !self.locals.is_empty() {
            let mut p = Vec::new();
            leb::write_u32(&mut p, self.locals.len() as u32);
            for (func, map) in &self.locals {
                leb::write_u32(&mut p, *func);
                name_map(&mut p, map);
            }
            subsection(&mut out, 2, p);
        }
        out
    }

    pub fn function_name(&self, func: u32) -> Option<&str> {
        self.functions
            .iter()
            .find(|(i, _)| *i == func)
            .map(|(_, n)| n.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_then_parse() {
        let names = NameSection {
            module: Some("calc".into()),
            functions: vec![(0, "add".into()), (3, "sub".into())],
            locals: vec![(0, vec![(0, "lhs".into()), (1, "rhs".into())])],
        };
        let bytes = names.encode();
        assert_eq!(NameSection::parse(&bytes), Some(names.clone()));
        assert_eq!(names.function_name(3), Some("sub"));
    }

    #[test]
    fn unknown_subsections_are_skipped() {
        let mut bytes = vec![7, 2, 0xAA, 0xBB];
        bytes.extend(
            NameSection {
                functions: vec![(1, "f".into())],
                ..NameSection::default()
            }
            .encode(),
        );
        let parsed = NameSection::parse(&bytes).unwrap();
        assert_eq!(parsed.functions, [(1, "f".to_owned())]);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        assert_eq!(NameSection::parse(&[1, 5, 1, 0]), None);
    }
}
