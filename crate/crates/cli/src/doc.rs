//! JSON documents read and written by the command-line tool.

use std::fmt;

use debloat_core::interp::{Invocation, Value, Workload, DEFAULT_FUEL};
use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// A workload file:
///
/// ```json
/// { "invocations": [ { "func": "add", "args": [ {"i32": 2}, {"i64": "-7"} ] } ],
///   "fuel": 1000000 }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadDocument {
    pub invocations: Vec<InvocationDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fuel: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvocationDocument {
    pub func: String,
    #[serde(default)]
    pub args: Vec<ValueLiteral>,
}

/// A typed argument. `i64` is written as a decimal string so that parsers
/// limited to doubles keep every bit; a plain JSON integer is also accepted.
/// Floats may be numbers or one of `"nan"`, `"inf"`, `"-inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ValueLiteral {
    I32(i32),
    I64(#[serde(with = "i64_string")] i64),
    F32(#[serde(with = "float_literal")] f64),
    F64(#[serde(with = "float_literal")] f64),
}

impl ValueLiteral {
    pub fn to_value(self) -> Value {
        match self {
            ValueLiteral::I32(v) => Value::I32(v),
            ValueLiteral::I64(v) => Value::I64(v),
            ValueLiteral::F32(v) => Value::F32(v as f32),
            ValueLiteral::F64(v) => Value::F64(v),
        }
    }

    pub fn from_value(v: Value) -> ValueLiteral {
        match v {
            Value::I32(v) => ValueLiteral::I32(v),
            Value::I64(v) => ValueLiteral::I64(v),
            Value::F32(v) => ValueLiteral::F32(f64::from(v)),
            Value::F64(v) => ValueLiteral::F64(v),
        }
    }
}

impl WorkloadDocument {
    pub fn parse(text: &str) -> serde_json::Result<WorkloadDocument> {
        serde_json::from_str(text)
    }

    pub fn to_workload(&self) -> Workload {
        Workload {
            invocations: self
                .invocations
                .iter()
                .map(|inv| {
                    Invocation::new(
                        inv.func.clone(),
                        inv.args.iter().map(|a| a.to_value()).collect::<Vec<_>>(),
                    )
                })
                .collect(),
            fuel: self.fuel.unwrap_or(DEFAULT_FUEL),
        }
    }

    pub fn from_workload(w: &Workload) -> WorkloadDocument {
        WorkloadDocument {
            invocations: w
                .invocations
                .iter()
                .map(|inv| InvocationDocument {
                    func: inv.export.clone(),
                    args: inv
                        .args
                        .iter()
                        .map(|v| ValueLiteral::from_value(*v))
                        .collect(),
                })
                .collect(),
            fuel: (w.fuel != DEFAULT_FUEL).then_some(w.fuel),
        }
    }
}

mod i64_string {
    use super::*;

    pub fn serialize<S: Serializer>(v: &i64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<i64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = i64;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a decimal string holding a signed 64-bit integer")
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<i64, E> {
                s.parse()
                    .map_err(|_| E::invalid_value(de::Unexpected::Str(s), &self))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<i64, E> {
                Ok(v)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<i64, E> {
                i64::try_from(v).map_err(|_| E::invalid_value(de::Unexpected::Unsigned(v), &self))
            }
        }
        d.deserialize_any(V)
    }
}

mod float_literal {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_str("nan")
        } else if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or one of \"nan\", \"inf\", \"-inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<f64, E> {
                match s {
                    "nan" => Ok(f64::NAN),
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    _ => Err(E::invalid_value(de::Unexpected::Str(s), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_literal_kinds() {
        let doc = WorkloadDocument::parse(
            r#"{"invocations": [{"func": "f", "args": [
                {"i32": -1}, {"i64": "-9223372036854775808"}, {"f32": 1.5}, {"f64": "nan"}]}],
               "fuel": 5}"#,
        )
        .unwrap();
        let w = doc.to_workload();
        assert_eq!(w.fuel, 5);
        let args = &w.invocations[0].args;
        assert_eq!(args[0], Value::I32(-1));
        assert_eq!(args[1], Value::I64(i64::MIN));
        assert_eq!(args[2], Value::F32(1.5));
        assert!(matches!(args[3], Value::F64(x) if x.is_nan()));
    }

    #[test]
    fn i64_is_written_as_string() {
        let text = serde_json::to_string(&ValueLiteral::I64(9007199254740993)).unwrap();
        assert_eq!(text, r#"{"i64":"9007199254740993"}"#);
        let back: ValueLiteral = serde_json::from_str(&text).unwrap();
        assert_eq!(back, ValueLiteral::I64(9007199254740993));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(WorkloadDocument::parse(r#"{"invocations": [], "extra": 1}"#).is_err());
        assert!(WorkloadDocument::parse(r#"{"invocations": [{"func": "f", "arg": []}]}"#).is_err());
        assert!(WorkloadDocument::parse(
            r#"{"invocations": [{"func": "f", "args": [{"i16": 1}]}]}"#
        )
        .is_err());
    }

    #[test]
    fn error_carries_location() {
        let err = WorkloadDocument::parse("{\n  \"invocations\": [,]\n}").unwrap_err();
        assert_eq!(err.line(), 2);
    }

    #[test]
    fn workload_round_trip() {
        let w =
            Workload::new([Invocation::new("g", [Value::I64(-3), Value::F64(0.25)])]).with_fuel(9);
        let doc = WorkloadDocument::from_workload(&w);
        let text = serde_json::to_string(&doc).unwrap();
        assert_eq!(WorkloadDocument::parse(&text).unwrap().to_workload(), w);
    }
}
