//! Labeled small-step interpreter.
//!
//! Assignments emit `r(indexes)`, array stores emit `w(i)` then
//! `r(indexes)`, and each conditional or loop test emits `b(v)` then
//! `r(indexes)`. Only the value `1` counts as true.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use serde_json::Value as Json;
use thiserror::Error;

use super::ast::{BinOp, Cmd, Expr, LeakTerm};
use crate::secenv::{Policy, LEAK_VAR};
use crate::trace::{bigint_json, LeakEvent, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RunError {
    #[error("step limit of {0} exceeded")]
    Timeout(u64),
    #[error("index {index} out of bounds for array `{array}` of length {len}")]
    OutOfBounds {
        array: String,
        index: BigInt,
        len: usize,
    },
    #[error("variable `{0}` has no value in the store")]
    Unbound(String),
    #[error("malformed store: {0}")]
    BadStore(String),
}

/// Program state: scalars, arrays and the `xl` accumulator of instrumented
/// programs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Store {
    pub scalars: BTreeMap<String, BigInt>,
    pub arrays: BTreeMap<String, Vec<BigInt>>,
    pub xl: Vec<LeakEvent>,
}

impl Store {
    /// All scalars and array cells zero.
    pub fn zeroed(policy: &Policy) -> Self {
        Store {
            scalars: policy
                .scalars()
                .iter()
                .map(|s| (s.clone(), BigInt::zero()))
                .collect(),
            arrays: policy
                .arrays()
                .iter()
                .map(|(a, n)| (a.clone(), vec![BigInt::zero(); *n]))
                .collect(),
            xl: Vec::new(),
        }
    }

    /// Reads `{"x": 1, "a": [0, 1]}`. With a policy, every declared name
    /// must be present with the right shape.
    pub fn from_json(text: &str, policy: Option<&Policy>) -> Result<Self, RunError> {
        let v: Json = serde_json::from_str(text).map_err(|e| RunError::BadStore(e.to_string()))?;
        let obj = v
            .as_object()
            .ok_or_else(|| RunError::BadStore("expected a JSON object".into()))?;
        let mut s = Store::default();
        for (k, v) in obj {
            if k == LEAK_VAR {
                return Err(RunError::BadStore(format!(
                    "`{LEAK_VAR}` cannot be initialised"
                )));
            }
            match v {
                Json::Array(items) => {
                    let cells = items.iter().map(json_int).collect::<Result<Vec<_>, _>>()?;
                    s.arrays.insert(k.clone(), cells);
                }
                other => {
                    s.scalars.insert(k.clone(), json_int(other)?);
                }
            }
        }
        if let Some(p) = policy {
            for x in p.scalars() {
                if !s.scalars.contains_key(x) {
                    return Err(RunError::Unbound(x.clone()));
                }
            }
            for (a, n) in p.arrays() {
                match s.arrays.get(a) {
                    Some(cells) if cells.len() == *n => {}
                    Some(cells) => {
                        return Err(RunError::BadStore(format!(
                            "array `{a}` has {} cells, expected {n}",
                            cells.len()
                        )))
                    }
                    None => return Err(RunError::Unbound(a.clone())),
                }
            }
            if let Some(k) = s
                .scalars
                .keys()
                .chain(s.arrays.keys())
                .find(|k| !p.is_declared(k))
            {
                return Err(RunError::BadStore(format!(
                    "`{k}` is not declared by the policy"
                )));
            }
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Json {
        let mut m = serde_json::Map::new();
        for (k, v) in &self.scalars {
            m.insert(k.clone(), bigint_json(v));
        }
        for (k, cells) in &self.arrays {
            m.insert(
                k.clone(),
                Json::Array(cells.iter().map(bigint_json).collect()),
            );
        }
        m.insert(
            LEAK_VAR.to_string(),
            serde_json::to_value(&self.xl).expect("trace serialises"),
        );
        Json::Object(m)
    }
}

fn json_int(v: &Json) -> Result<BigInt, RunError> {
    match v {
        Json::Number(n) => n
            .as_i64()
            .map(BigInt::from)
            .ok_or_else(|| RunError::BadStore(format!("`{n}` is not an integer"))),
        Json::String(s) => s
            .parse()
            .map_err(|_| RunError::BadStore(format!("`{s}` is not an integer"))),
        other => Err(RunError::BadStore(format!("`{other}` is not an integer"))),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOutcome {
    pub store: Store,
    pub trace: Vec<LeakEvent>,
    pub steps: u64,
}

fn truthy(v: &BigInt) -> bool {
    v.is_one()
}

fn bool_int(b: bool) -> BigInt {
    if b {
        BigInt::one()
    } else {
        BigInt::zero()
    }
}

pub fn eval(e: &Expr, s: &Store) -> Result<BigInt, RunError> {
    match e {
        Expr::Int(v) => Ok(v.clone()),
        Expr::Var(x) => s
            .scalars
            .get(x)
            .cloned()
            .ok_or_else(|| RunError::Unbound(x.clone())),
        Expr::Index(a, i) => {
            let idx = eval(i, s)?;
            let cells = s
                .arrays
                .get(a)
                .ok_or_else(|| RunError::Unbound(a.clone()))?;
            match idx.to_usize() {
                Some(k) if k < cells.len() => Ok(cells[k].clone()),
                _ => Err(RunError::OutOfBounds {
                    array: a.clone(),
                    index: idx,
                    len: cells.len(),
                }),
            }
        }
        Expr::Not(e) => Ok(bool_int(!truthy(&eval(e, s)?))),
        Expr::Bin(op, l, r) => {
            let a = eval(l, s)?;
            let b = eval(r, s)?;
            Ok(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Eq => bool_int(a == b),
                BinOp::Ne => bool_int(a != b),
                BinOp::Lt => bool_int(a < b),
                BinOp::Le => bool_int(a <= b),
                BinOp::And => a & b,
                BinOp::Or => a | b,
            })
        }
    }
}

fn read_event(e: &Expr, s: &Store) -> Result<LeakEvent, RunError> {
    let vals = e
        .index_exprs()
        .into_iter()
        .map(|i| eval(i, s).map(Value::Int))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LeakEvent::Read(vals))
}

fn leak_events(terms: &[LeakTerm], s: &Store) -> Result<Vec<LeakEvent>, RunError> {
    terms
        .iter()
        .map(|t| {
            Ok(match t {
                LeakTerm::Branch(e) => LeakEvent::Branch(Value::Int(eval(e, s)?)),
                LeakTerm::Write(e) => LeakEvent::Write(Value::Int(eval(e, s)?)),
                LeakTerm::Read(es) => LeakEvent::Read(
                    es.iter()
                        .map(|e| eval(e, s).map(Value::Int))
                        .collect::<Result<_, _>>()?,
                ),
            })
        })
        .collect()
}

fn exec(cmd: &Cmd, mut store: Store, cap: u64, labeled: bool) -> Result<RunOutcome, RunError> {
    let mut trace = Vec::new();
    let mut steps = 0u64;
    let mut stack: Vec<&Cmd> = vec![cmd];
    while let Some(c) = stack.pop() {
        if !matches!(c, Cmd::Seq(..)) {
            steps += 1;
            if steps > cap {
                return Err(RunError::Timeout(cap));
            }
        }
        match c {
            Cmd::Skip => {}
            Cmd::Seq(a, b) => {
                stack.push(b);
                stack.push(a);
            }
            Cmd::Assign(x, e) => {
                if labeled {
                    trace.push(read_event(e, &store)?);
                }
                let v = eval(e, &store)?;
                match store.scalars.get_mut(x) {
                    Some(slot) => *slot = v,
                    None => return Err(RunError::Unbound(x.clone())),
                }
            }
            Cmd::Store(a, i, e) => {
                let idx = eval(i, &store)?;
                if labeled {
                    trace.push(LeakEvent::Write(Value::Int(idx.clone())));
                    trace.push(read_event(e, &store)?);
                }
                let v = eval(e, &store)?;
                let cells = store
                    .arrays
                    .get_mut(a)
                    .ok_or_else(|| RunError::Unbound(a.clone()))?;
                let len = cells.len();
                match idx.to_usize() {
                    Some(k) if k < len => cells[k] = v,
                    _ => {
                        return Err(RunError::OutOfBounds {
                            array: a.clone(),
                            index: idx,
                            len,
                        })
                    }
                }
            }
            Cmd::Leak(terms) => {
                let evs = leak_events(terms, &store)?;
                store.xl.extend(evs);
            }
            Cmd::If(e, a, b) => {
                let v = eval(e, &store)?;
                if labeled {
                    trace.push(LeakEvent::Branch(Value::Int(v.clone())));
                    trace.push(read_event(e, &store)?);
                }
                stack.push(if truthy(&v) { a } else { b });
            }
            Cmd::While(e, body) => {
                let v = eval(e, &store)?;
                if labeled {
                    trace.push(LeakEvent::Branch(Value::Int(v.clone())));
                    trace.push(read_event(e, &store)?);
                }
                if truthy(&v) {
                    stack.push(c);
                    stack.push(body);
                }
            }
        }
    }
    Ok(RunOutcome {
        store,
        trace,
        steps,
    })
}

/// Runs with leakage labels; fails with [`RunError::Timeout`] past `cap`
/// primitive steps.
pub fn run(cmd: &Cmd, store: Store, cap: u64) -> Result<RunOutcome, RunError> {
    exec(cmd, store, cap, true)
}

/// Runs without recording observations.
pub fn run_unlabeled(cmd: &Cmd, store: Store, cap: u64) -> Result<RunOutcome, RunError> {
    exec(cmd, store, cap, false)
}
