//! Line-oriented IR reader.
//!
//! ```text
//! global @p -> b0 10
//! alloca %x -> b2 1
//! entry main
//! exit end
//! block main:
//!   %1 = load %x
//!   %2 = op gep @p 0 %1
//!   store 7 %2
//!   goto end
//! block end:
//! ptsto %2 {b0}
//! ```
//! `#` and `;` start comments.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use thiserror::Error;

use super::{Block, BlockId, Instr, IrProgram, MemDecl, OpName, Operand};
use crate::ir_graphs::{compute_dominators, reachable_from};
use crate::secenv::LEAK_VAR;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("block `{0}` does not end with `cond` or `goto`")]
    Unterminated(String),
    #[error("block `{block}` has instructions after its terminator")]
    AfterTerminator { block: String },
    #[error("exit block `{0}` must not end with a jump")]
    ExitTerminator(String),
    #[error("unknown block `{0}`")]
    UnknownBlock(String),
    #[error("missing `{0}` declaration")]
    Missing(&'static str),
    #[error("branching register `{0}` must be assigned exactly once before its `cond`")]
    BranchRegister(String),
    #[error("register `{0}` is never declared or assigned")]
    UndefinedRegister(String),
    #[error("unknown memory block `{0}`")]
    UnknownMemory(String),
    #[error("exit is unreachable from block `{0}`")]
    ExitUnreachable(String),
    #[error("duplicate declaration of `{0}`")]
    Duplicate(String),
}

fn syntax<T>(line: usize, msg: impl Into<String>) -> Result<T, IrParseError> {
    Err(IrParseError::Syntax {
        line,
        msg: msg.into(),
    })
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn is_reg(s: &str) -> bool {
    (s.starts_with('%') || s.starts_with('@'))
        && s.len() > 1
        && s[1..]
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

struct RawBlock {
    name: String,
    instrs: Vec<(usize, RawInstr)>,
}

enum RawInstr {
    Op {
        dest: String,
        op: OpName,
        args: Vec<String>,
    },
    Load {
        dest: String,
        addr: String,
    },
    Store {
        val: String,
        addr: String,
    },
    Cond {
        reg: String,
        then_b: String,
        else_b: String,
    },
    Goto(String),
}

fn parse_instr(line_no: usize, toks: &[&str]) -> Result<RawInstr, IrParseError> {
    match toks {
        ["goto", b] => Ok(RawInstr::Goto(b.to_string())),
        ["cond", r, t, e] => {
            if !is_reg(r) {
                return syntax(line_no, format!("`{r}` is not a register"));
            }
            Ok(RawInstr::Cond {
                reg: r.to_string(),
                then_b: t.to_string(),
                else_b: e.to_string(),
            })
        }
        ["store", v, a] => Ok(RawInstr::Store {
            val: v.to_string(),
            addr: a.to_string(),
        }),
        [d, "=", "load", a] => {
            if !is_reg(d) {
                return syntax(line_no, format!("`{d}` is not a register"));
            }
            Ok(RawInstr::Load {
                dest: d.to_string(),
                addr: a.to_string(),
            })
        }
        [d, "=", "op", name, args @ ..] => {
            if !is_reg(d) {
                return syntax(line_no, format!("`{d}` is not a register"));
            }
            let op = OpName::parse(name).ok_or_else(|| IrParseError::Syntax {
                line: line_no,
                msg: format!("unknown operation `{name}`"),
            })?;
            if !op.arity_ok(args.len()) {
                return syntax(line_no, format!("wrong number of operands for `{name}`"));
            }
            Ok(RawInstr::Op {
                dest: d.to_string(),
                op,
                args: args.iter().map(|s| s.to_string()).collect(),
            })
        }
        _ => syntax(
            line_no,
            format!("cannot parse instruction `{}`", toks.join(" ")),
        ),
    }
}

/// Splits `ptsto %r {a, b}` into the register and its block names.
fn parse_ptsto(line_no: usize, rest: &str) -> Result<(String, BTreeSet<String>), IrParseError> {
    let rest = rest.trim();
    let (reg, set) = rest
        .split_once(char::is_whitespace)
        .ok_or_else(|| IrParseError::Syntax {
            line: line_no,
            msg: "expected `ptsto %r {blocks}`".into(),
        })?;
    let inner = set
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| IrParseError::Syntax {
            line: line_no,
            msg: "expected braces around block set".into(),
        })?;
    if !is_reg(reg) {
        return syntax(line_no, format!("`{reg}` is not a register"));
    }
    let blocks = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    Ok((reg.to_string(), blocks))
}

pub fn parse_ir(text: &str) -> Result<IrProgram, IrParseError> {
    let mut decls: Vec<MemDecl> = Vec::new();
    let mut entry: Option<(usize, String)> = None;
    let mut exit: Option<(usize, String)> = None;
    let mut raw: Vec<RawBlock> = Vec::new();
    let mut ptsto: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();

    for (idx, full) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = full.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "global" | "alloca" => {
                let [kw, reg, "->", blk, len] = toks[..] else {
                    return syntax(line_no, format!("expected `{} REG -> BLOCK LEN`", toks[0]));
                };
                if !is_reg(reg) {
                    return syntax(line_no, format!("`{reg}` is not a register"));
                }
                if !is_ident(blk) || blk == LEAK_VAR {
                    return syntax(line_no, format!("`{blk}` is not a valid memory block name"));
                }
                let len: usize = match len.parse() {
                    Ok(n) if n > 0 => n,
                    _ => return syntax(line_no, format!("`{len}` is not a positive length")),
                };
                if decls.iter().any(|d| d.reg == reg || d.block == blk) {
                    return Err(IrParseError::Duplicate(format!("{reg} -> {blk}")));
                }
                decls.push(MemDecl {
                    reg: reg.into(),
                    block: blk.into(),
                    len,
                    global: kw == "global",
                });
            }
            "entry" | "exit" => {
                let [kw, b] = toks[..] else {
                    return syntax(line_no, format!("expected `{} BLOCK`", toks[0]));
                };
                let slot = if kw == "entry" { &mut entry } else { &mut exit };
                if slot.is_some() {
                    return Err(IrParseError::Duplicate(kw.to_string()));
                }
                *slot = Some((line_no, b.to_string()));
            }
            "block" => {
                let name = match toks[..] {
                    ["block", n] if n.ends_with(':') => &n[..n.len() - 1],
                    ["block", n, ":"] => n,
                    _ => return syntax(line_no, "expected `block NAME:`"),
                };
                if !is_ident(name) {
                    return syntax(line_no, format!("`{name}` is not a valid block name"));
                }
                if raw.iter().any(|b| b.name == name) {
                    return Err(IrParseError::Duplicate(name.to_string()));
                }
                raw.push(RawBlock {
                    name: name.to_string(),
                    instrs: Vec::new(),
                });
            }
            "ptsto" => {
                let (reg, set) = parse_ptsto(line_no, &line["ptsto".len()..])?;
                ptsto.insert(reg, set);
            }
            _ => {
                let Some(cur) = raw.last_mut() else {
                    return syntax(line_no, "instruction outside of a block");
                };
                let ins = parse_instr(line_no, &toks)?;
                cur.instrs.push((line_no, ins));
            }
        }
    }

    let block_ids: BTreeMap<String, BlockId> = raw
        .iter()
        .enumerate()
        .map(|(i, b)| (b.name.clone(), i))
        .collect();
    let resolve_block = |name: &str| {
        block_ids
            .get(name)
            .copied()
            .ok_or_else(|| IrParseError::UnknownBlock(name.to_string()))
    };
    let (_, entry_name) = entry.ok_or(IrParseError::Missing("entry"))?;
    let (_, exit_name) = exit.ok_or(IrParseError::Missing("exit"))?;
    let entry = resolve_block(&entry_name)?;
    let exit = resolve_block(&exit_name)?;
    let memory: BTreeMap<String, usize> = decls.iter().map(|d| (d.block.clone(), d.len)).collect();

    let operand = |line_no: usize, s: &str| -> Result<Operand, IrParseError> {
        if is_reg(s) {
            Ok(Operand::Reg(s.to_string()))
        } else if let Ok(v) = s.parse::<BigInt>() {
            Ok(Operand::Imm(v))
        } else if memory.contains_key(s) {
            Ok(Operand::Block(s.to_string()))
        } else if is_ident(s) {
            Err(IrParseError::UnknownMemory(s.to_string()))
        } else {
            syntax(line_no, format!("cannot parse operand `{s}`"))
        }
    };

    let mut blocks = Vec::with_capacity(raw.len());
    for (bid, rb) in raw.iter().enumerate() {
        let mut instrs = Vec::with_capacity(rb.instrs.len());
        for (pos, (line_no, ri)) in rb.instrs.iter().enumerate() {
            let ins = match ri {
                RawInstr::Op { dest, op, args } => Instr::Op {
                    dest: dest.clone(),
                    op: *op,
                    args: args
                        .iter()
                        .map(|a| operand(*line_no, a))
                        .collect::<Result<_, _>>()?,
                },
                RawInstr::Load { dest, addr } => Instr::Load {
                    dest: dest.clone(),
                    addr: operand(*line_no, addr)?,
                },
                RawInstr::Store { val, addr } => Instr::Store {
                    val: operand(*line_no, val)?,
                    addr: operand(*line_no, addr)?,
                },
                RawInstr::Cond {
                    reg,
                    then_b,
                    else_b,
                } => Instr::Cond {
                    reg: reg.clone(),
                    then_b: resolve_block(then_b)?,
                    else_b: resolve_block(else_b)?,
                },
                RawInstr::Goto(t) => Instr::Goto(resolve_block(t)?),
            };
            if ins.is_terminator() && pos + 1 != rb.instrs.len() {
                return Err(IrParseError::AfterTerminator {
                    block: rb.name.clone(),
                });
            }
            instrs.push(ins);
        }
        let terminated = instrs.last().is_some_and(Instr::is_terminator);
        if bid == exit && terminated {
            return Err(IrParseError::ExitTerminator(rb.name.clone()));
        }
        if bid != exit && !terminated {
            return Err(IrParseError::Unterminated(rb.name.clone()));
        }
        blocks.push(Block {
            name: rb.name.clone(),
            instrs,
        });
    }

    let mut registers: BTreeSet<String> = decls.iter().map(|d| d.reg.clone()).collect();
    let declared: BTreeSet<String> = registers.clone();
    for b in &blocks {
        for i in &b.instrs {
            if let Some(d) = i.dest() {
                if declared.contains(d) {
                    return Err(IrParseError::Duplicate(format!(
                        "assignment to address register {d}"
                    )));
                }
                registers.insert(d.to_string());
            }
        }
    }
    for b in &blocks {
        for i in &b.instrs {
            let mut used: Vec<&str> = i
                .operands()
                .into_iter()
                .filter_map(|o| match o {
                    Operand::Reg(r) => Some(r.as_str()),
                    _ => None,
                })
                .collect();
            if let Instr::Cond { reg, .. } = i {
                used.push(reg);
            }
            if let Some(r) = used.into_iter().find(|r| !registers.contains(*r)) {
                return Err(IrParseError::UndefinedRegister(r.to_string()));
            }
        }
    }
    for (r, set) in &ptsto {
        if !registers.contains(r) {
            return Err(IrParseError::UndefinedRegister(r.clone()));
        }
        if let Some(m) = set.iter().find(|m| !memory.contains_key(*m)) {
            return Err(IrParseError::UnknownMemory(m.clone()));
        }
    }

    let prog = IrProgram {
        blocks,
        entry,
        exit,
        decls,
        memory,
        ptsto,
        registers,
    };
    validate_cfg(&prog)?;
    Ok(prog)
}

/// Exit reachable from every live block; branching registers defined once
/// at a point dominating their `cond`.
fn validate_cfg(p: &IrProgram) -> Result<(), IrParseError> {
    let live = reachable_from(p, p.entry);
    for &b in &live {
        if !reachable_from(p, b).contains(&p.exit) {
            return Err(IrParseError::ExitUnreachable(p.block_name(b).to_string()));
        }
    }
    let dom = compute_dominators(p);
    let mut defs: BTreeMap<&str, Vec<(BlockId, usize)>> = BTreeMap::new();
    for (bid, b) in p.blocks.iter().enumerate() {
        for (k, i) in b.instrs.iter().enumerate() {
            if let Some(d) = i.dest() {
                defs.entry(d).or_default().push((bid, k));
            }
        }
    }
    for (bid, b) in p.blocks.iter().enumerate() {
        if let Some(Instr::Cond { reg, .. }) = b.instrs.last() {
            let ok = match defs.get(reg.as_str()).map(Vec::as_slice) {
                Some([(db, _)]) if *db == bid => true,
                Some([(db, _)]) => !live.contains(&bid) || dom.dominates(*db, bid),
                _ => false,
            };
            if !ok {
                return Err(IrParseError::BranchRegister(reg.clone()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX: &str = "\
global @p -> b0 10
global @q -> b1 10
alloca %x -> b2 1
alloca %y -> b3 1
entry main
exit end
block main:
  %1 = load %y
  %2 = op gep @q 0 %1
  %3 = load %2
  %4 = load %x
  %5 = op gep @p 0 %4
  store %3 %5
  goto end
block end:
  %ret = op add 0 0
";

    #[test]
    fn parses_and_prints() {
        let p = parse_ir(EX).unwrap();
        assert_eq!(p.blocks.len(), 2);
        assert_eq!(p.memory.len(), 4);
        assert!(p.registers.contains("%ret"));
        assert_eq!(parse_ir(&p.to_string()).unwrap(), p);
    }

    #[test]
    fn minimal_program() {
        let p = parse_ir("entry a\nexit end\nblock a:\n goto end\nblock end:\n").unwrap();
        assert_eq!(p.successors(p.entry), vec![p.exit]);
    }

    #[test]
    fn structural_errors() {
        let e =
            parse_ir("entry a\nexit end\nblock a:\n %1 = op add 1 2\nblock end:\n").unwrap_err();
        assert_eq!(e, IrParseError::Unterminated("a".into()));
        let e = parse_ir("entry a\nexit end\nblock a:\n goto nowhere\nblock end:\n").unwrap_err();
        assert_eq!(e, IrParseError::UnknownBlock("nowhere".into()));
        let e = parse_ir("exit end\nblock end:\n").unwrap_err();
        assert_eq!(e, IrParseError::Missing("entry"));
        let e = parse_ir("entry a\nexit end\nblock a:\n %1 = op xor 1 2\n goto end\nblock end:\n")
            .unwrap_err();
        assert!(matches!(e, IrParseError::Syntax { line: 4, .. }));
        let e = parse_ir("entry a\nexit end\nblock a:\n goto end\n goto end\nblock end:\n")
            .unwrap_err();
        assert!(matches!(e, IrParseError::AfterTerminator { .. }));
    }

    #[test]
    fn branching_registers_are_single_assignment() {
        let twice = "entry a\nexit end\nblock a:\n %c = op eq 1 1\n %c = op eq 1 0\n cond %c end end\nblock end:\n";
        assert_eq!(
            parse_ir(twice).unwrap_err(),
            IrParseError::BranchRegister("%c".into())
        );
        let late = "entry a\nexit end\nblock a:\n cond %c b end\nblock b:\n %c = op eq 1 1\n goto end\nblock end:\n";
        assert_eq!(
            parse_ir(late).unwrap_err(),
            IrParseError::BranchRegister("%c".into())
        );
    }

    #[test]
    fn exit_must_be_reachable() {
        let spin = "entry a\nexit end\nblock a:\n goto a\nblock end:\n";
        assert_eq!(
            parse_ir(spin).unwrap_err(),
            IrParseError::ExitUnreachable("a".into())
        );
    }
}
