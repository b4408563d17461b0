//! Runtime values and leakage events shared by both interpreters.

use std::fmt;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::ser::{Serialize, SerializeMap, Serializer};

/// A memory address: a block name and a cell offset.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address {
    pub block: String,
    pub offset: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(BigInt),
    Addr(Address),
}

impl Value {
    pub fn int(v: i64) -> Self {
        Value::Int(BigInt::from(v))
    }

    pub fn as_int(&self) -> Option<&BigInt> {
        match self {
            Value::Int(i) => Some(i),
            Value::Addr(_) => None,
        }
    }
}

impl From<BigInt> for Value {
    fn from(v: BigInt) -> Self {
        Value::Int(v)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Addr(a) => write!(f, "&{}[{}]", a.block, a.offset),
        }
    }
}

pub(crate) fn bigint_json(v: &BigInt) -> serde_json::Value {
    match v.to_i64() {
        Some(i) => serde_json::Value::from(i),
        None => serde_json::Value::String(v.to_string()),
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Int(i) => bigint_json(i).serialize(s),
            Value::Addr(a) => {
                let mut m = s.serialize_map(Some(2))?;
                m.serialize_entry("block", &a.block)?;
                m.serialize_entry("offset", &a.offset)?;
                m.end()
            }
        }
    }
}

/// One observation made by the attacker.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LeakEvent {
    Branch(Value),
    Read(Vec<Value>),
    Write(Value),
    Jump(bool),
}

impl fmt::Display for LeakEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeakEvent::Branch(v) => write!(f, "b({v})"),
            LeakEvent::Read(vs) => {
                f.write_str("r(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(")")
            }
            LeakEvent::Write(v) => write!(f, "w({v})"),
            LeakEvent::Jump(d) => write!(f, "j({})", u8::from(*d)),
        }
    }
}

impl Serialize for LeakEvent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(1))?;
        match self {
            LeakEvent::Branch(v) => m.serialize_entry("b", v)?,
            LeakEvent::Read(vs) => m.serialize_entry("r", vs)?,
            LeakEvent::Write(v) => m.serialize_entry("w", v)?,
            LeakEvent::Jump(d) => m.serialize_entry("j", &u8::from(*d))?,
        }
        m.end()
    }
}

/// Renders a trace as `b(1) : r(0) : ...`, or `[]` when empty.
pub fn render_trace(trace: &[LeakEvent]) -> String {
    if trace.is_empty() {
        return "[]".to_string();
    }
    trace
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" : ")
}
