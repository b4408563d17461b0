//! Labeled interpreter for the IR.
//!
//! Loads emit `r([addr])`, stores `w(addr)` and conditional jumps `j(1)` or
//! `j(0)`. Registers bound by `global`/`alloca` hold their block address;
//! every other register starts at 0.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use super::{BlockId, Instr, IrProgram, OpName, Operand};
use crate::trace::{Address, LeakEvent, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrRunError {
    #[error("step limit of {0} exceeded")]
    Timeout(u64),
    #[error("`{0}` is not an address")]
    NotAnAddress(Value),
    #[error("address {block}[{offset}] is outside its block")]
    OutOfBounds { block: String, offset: i64 },
    #[error("operation `{op}` applied to an address")]
    AddressArithmetic { op: &'static str },
    #[error("initial memory for `{0}` is missing or has the wrong length")]
    BadMemory(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrState {
    pub block: BlockId,
    pub index: usize,
    pub regs: BTreeMap<String, Value>,
    pub mem: BTreeMap<String, Vec<Value>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrOutcome {
    pub state: IrState,
    pub trace: Vec<LeakEvent>,
    pub steps: u64,
}

/// State at `(entry, 0)` with the given integer memory contents.
pub fn initial_state(
    p: &IrProgram,
    mem: &BTreeMap<String, Vec<BigInt>>,
) -> Result<IrState, IrRunError> {
    let mut m = BTreeMap::new();
    for (blk, len) in &p.memory {
        match mem.get(blk) {
            Some(cells) if cells.len() == *len => {
                m.insert(blk.clone(), cells.iter().cloned().map(Value::Int).collect());
            }
            _ => return Err(IrRunError::BadMemory(blk.clone())),
        }
    }
    let addr = p.address_registers();
    let regs = p
        .registers
        .iter()
        .map(|r| {
            let v = match addr.get(r.as_str()) {
                Some(b) => Value::Addr(Address {
                    block: b.to_string(),
                    offset: 0,
                }),
                None => Value::Int(BigInt::zero()),
            };
            (r.clone(), v)
        })
        .collect();
    Ok(IrState {
        block: p.entry,
        index: 0,
        regs,
        mem: m,
    })
}

fn eval(s: &IrState, o: &Operand) -> Value {
    match o {
        Operand::Imm(v) => Value::Int(v.clone()),
        Operand::Reg(r) => s
            .regs
            .get(r)
            .cloned()
            .unwrap_or_else(|| Value::Int(BigInt::zero())),
        Operand::Block(b) => Value::Addr(Address {
            block: b.clone(),
            offset: 0,
        }),
    }
}

fn int_of(v: &Value, op: OpName) -> Result<&BigInt, IrRunError> {
    v.as_int()
        .ok_or(IrRunError::AddressArithmetic { op: op.name() })
}

fn bool_val(b: bool) -> Value {
    Value::Int(if b { BigInt::one() } else { BigInt::zero() })
}

fn apply(op: OpName, args: &[Value]) -> Result<Value, IrRunError> {
    Ok(match op {
        OpName::Add => Value::Int(int_of(&args[0], op)? + int_of(&args[1], op)?),
        OpName::Sub => Value::Int(int_of(&args[0], op)? - int_of(&args[1], op)?),
        OpName::Mul => Value::Int(int_of(&args[0], op)? * int_of(&args[1], op)?),
        OpName::And => Value::Int(int_of(&args[0], op)? & int_of(&args[1], op)?),
        OpName::Lt => bool_val(int_of(&args[0], op)? < int_of(&args[1], op)?),
        OpName::Eq => bool_val(args[0] == args[1]),
        OpName::Not => bool_val(!int_of(&args[0], op)?.is_one()),
        OpName::Gep => {
            let Value::Addr(base) = &args[0] else {
                return Err(IrRunError::NotAnAddress(args[0].clone()));
            };
            let mut off = BigInt::from(base.offset);
            for a in &args[1..] {
                off += int_of(a, op)?;
            }
            let offset = off.to_i64().ok_or(IrRunError::OutOfBounds {
                block: base.block.clone(),
                offset: i64::MAX,
            })?;
            Value::Addr(Address {
                block: base.block.clone(),
                offset,
            })
        }
    })
}

fn cell<'a>(s: &'a mut IrState, v: &Value) -> Result<&'a mut Value, IrRunError> {
    let Value::Addr(a) = v else {
        return Err(IrRunError::NotAnAddress(v.clone()));
    };
    let oob = || IrRunError::OutOfBounds {
        block: a.block.clone(),
        offset: a.offset,
    };
    let cells = s.mem.get_mut(&a.block).ok_or_else(oob)?;
    let k = usize::try_from(a.offset).map_err(|_| oob())?;
    cells.get_mut(k).ok_or_else(oob)
}

/// Runs from `state` until the end of the exit block.
pub fn run_ir(p: &IrProgram, mut state: IrState, cap: u64) -> Result<IrOutcome, IrRunError> {
    let mut trace = Vec::new();
    let mut steps = 0u64;
    loop {
        let block = &p.blocks[state.block];
        if state.index >= block.instrs.len() {
            // Only the exit block may fall off its end.
            return Ok(IrOutcome {
                state,
                trace,
                steps,
            });
        }
        steps += 1;
        if steps > cap {
            return Err(IrRunError::Timeout(cap));
        }
        match &block.instrs[state.index] {
            Instr::Op { dest, op, args } => {
                let vals: Vec<Value> = args.iter().map(|a| eval(&state, a)).collect();
                let v = apply(*op, &vals)?;
                state.regs.insert(dest.clone(), v);
                state.index += 1;
            }
            Instr::Load { dest, addr } => {
                let ad = eval(&state, addr);
                let v = cell(&mut state, &ad)?.clone();
                trace.push(LeakEvent::Read(vec![ad]));
                state.regs.insert(dest.clone(), v);
                state.index += 1;
            }
            Instr::Store { val, addr } => {
                let ad = eval(&state, addr);
                let v = eval(&state, val);
                *cell(&mut state, &ad)? = v;
                trace.push(LeakEvent::Write(ad));
                state.index += 1;
            }
            Instr::Cond {
                reg,
                then_b,
                else_b,
            } => {
                let taken = matches!(state.regs.get(reg), Some(Value::Int(v)) if v.is_one());
                trace.push(LeakEvent::Jump(taken));
                state.block = if taken { *then_b } else { *else_b };
                state.index = 0;
            }
            Instr::Goto(t) => {
                state.block = *t;
                state.index = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_ir;
    use crate::trace::render_trace;

    fn mem(entries: &[(&str, &[i64])]) -> BTreeMap<String, Vec<BigInt>> {
        entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.iter().map(|x| BigInt::from(*x)).collect()))
            .collect()
    }

    #[test]
    fn goto_only_program_is_silent() {
        let p = parse_ir("entry a\nexit end\nblock a:\n goto end\nblock end:\n").unwrap();
        let out = run_ir(&p, initial_state(&p, &BTreeMap::new()).unwrap(), 10).unwrap();
        assert!(out.trace.is_empty());
        assert_eq!(out.state.block, p.exit);
    }

    #[test]
    fn cond_on_one_takes_then() {
        let src = "entry a\nexit end\nblock a:\n %c = op eq 1 1\n cond %c t end\nblock t:\n goto end\nblock end:\n";
        let p = parse_ir(src).unwrap();
        let out = run_ir(&p, initial_state(&p, &BTreeMap::new()).unwrap(), 10).unwrap();
        assert_eq!(render_trace(&out.trace), "j(1)");
    }

    #[test]
    fn indexed_accesses_report_addresses() {
        let src = "global @p -> b0 2\nentry a\nexit end\nblock a:\n %i = load @p\n %g = op gep @p %i\n store 7 %g\n %v = load b0\n goto end\nblock end:\n";
        let p = parse_ir(src).unwrap();
        let out = run_ir(&p, initial_state(&p, &mem(&[("b0", &[1, 0])])).unwrap(), 10).unwrap();
        assert_eq!(
            render_trace(&out.trace),
            "r(&b0[0]) : w(&b0[1]) : r(&b0[0])"
        );
        assert_eq!(out.state.mem["b0"][1], Value::int(7));
        let bad = initial_state(&p, &mem(&[("b0", &[2, 0])])).unwrap();
        assert!(matches!(
            run_ir(&p, bad, 10),
            Err(IrRunError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn loops_time_out() {
        let src = "entry a\nexit end\nblock a:\n %c = op eq 1 1\n cond %c a end\nblock end:\n";
        let p = parse_ir(src).unwrap();
        let s = initial_state(&p, &BTreeMap::new()).unwrap();
        assert_eq!(run_ir(&p, s, 20).unwrap_err(), IrRunError::Timeout(20));
    }
}
