//! A simplified SSA-style IR with explicit memory blocks.
//!
//! Programs are control-flow graphs of basic blocks. Every block except the
//! exit ends with a `cond` or `goto`; execution stops at the end of the exit
//! block. Memory is a set of named fixed-length blocks; an address is a
//! block name and an offset.

pub mod interp;
pub mod parser;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;

pub use interp::{initial_state, run_ir, IrOutcome, IrRunError, IrState};
pub use parser::{parse_ir, IrParseError};

pub type BlockId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Imm(BigInt),
    /// `%name` or `@name`.
    Reg(String),
    /// A memory block name, evaluating to the address of its first cell.
    Block(String),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Imm(v) => write!(f, "{v}"),
            Operand::Reg(r) | Operand::Block(r) => f.write_str(r),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpName {
    Add,
    Sub,
    Mul,
    Eq,
    Lt,
    And,
    Not,
    Gep,
}

impl OpName {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "add" => OpName::Add,
            "sub" => OpName::Sub,
            "mul" => OpName::Mul,
            "eq" => OpName::Eq,
            "lt" => OpName::Lt,
            "and" => OpName::And,
            "not" => OpName::Not,
            "gep" => OpName::Gep,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            OpName::Add => "add",
            OpName::Sub => "sub",
            OpName::Mul => "mul",
            OpName::Eq => "eq",
            OpName::Lt => "lt",
            OpName::And => "and",
            OpName::Not => "not",
            OpName::Gep => "gep",
        }
    }

    /// Whether `n` operands are acceptable.
    pub fn arity_ok(self, n: usize) -> bool {
        match self {
            OpName::Not => n == 1,
            OpName::Gep => n >= 1,
            _ => n == 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instr {
    Op {
        dest: String,
        op: OpName,
        args: Vec<Operand>,
    },
    Load {
        dest: String,
        addr: Operand,
    },
    Store {
        val: Operand,
        addr: Operand,
    },
    Cond {
        reg: String,
        then_b: BlockId,
        else_b: BlockId,
    },
    Goto(BlockId),
}

impl Instr {
    pub fn is_terminator(&self) -> bool {
        matches!(self, Instr::Cond { .. } | Instr::Goto(_))
    }

    pub fn dest(&self) -> Option<&str> {
        match self {
            Instr::Op { dest, .. } | Instr::Load { dest, .. } => Some(dest),
            _ => None,
        }
    }

    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Instr::Op { args, .. } => args.iter().collect(),
            Instr::Load { addr, .. } => vec![addr],
            Instr::Store { val, addr } => vec![val, addr],
            Instr::Cond { .. } | Instr::Goto(_) => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub instrs: Vec<Instr>,
}

/// `global @r -> blk len` or `alloca %r -> blk len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemDecl {
    pub reg: String,
    pub block: String,
    pub len: usize,
    pub global: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrProgram {
    pub blocks: Vec<Block>,
    pub entry: BlockId,
    pub exit: BlockId,
    pub decls: Vec<MemDecl>,
    /// Memory block name to length.
    pub memory: BTreeMap<String, usize>,
    /// `ptsto` overrides.
    pub ptsto: BTreeMap<String, BTreeSet<String>>,
    /// Every register of the program, declared or assigned.
    pub registers: BTreeSet<String>,
}

impl IrProgram {
    pub fn block_id(&self, name: &str) -> Option<BlockId> {
        self.blocks.iter().position(|b| b.name == name)
    }

    pub fn block_name(&self, b: BlockId) -> &str {
        &self.blocks[b].name
    }

    pub fn terminator(&self, b: BlockId) -> Option<&Instr> {
        self.blocks[b].instrs.last().filter(|i| i.is_terminator())
    }

    pub fn successors(&self, b: BlockId) -> Vec<BlockId> {
        match self.terminator(b) {
            Some(Instr::Cond { then_b, else_b, .. }) => {
                if then_b == else_b {
                    vec![*then_b]
                } else {
                    vec![*then_b, *else_b]
                }
            }
            Some(Instr::Goto(t)) => vec![*t],
            _ => vec![],
        }
    }

    /// Registers bound to a memory block by a declaration.
    pub fn address_registers(&self) -> BTreeMap<&str, &str> {
        self.decls
            .iter()
            .map(|d| (d.reg.as_str(), d.block.as_str()))
            .collect()
    }

    pub fn instr_count(&self) -> usize {
        self.blocks.iter().map(|b| b.instrs.len()).sum()
    }

    pub fn render_instr(&self, i: &Instr) -> String {
        match i {
            Instr::Op { dest, op, args } => {
                let a: Vec<String> = args.iter().map(ToString::to_string).collect();
                format!("{dest} = op {} {}", op.name(), a.join(" "))
            }
            Instr::Load { dest, addr } => format!("{dest} = load {addr}"),
            Instr::Store { val, addr } => format!("store {val} {addr}"),
            Instr::Cond {
                reg,
                then_b,
                else_b,
            } => {
                format!(
                    "cond {reg} {} {}",
                    self.block_name(*then_b),
                    self.block_name(*else_b)
                )
            }
            Instr::Goto(t) => format!("goto {}", self.block_name(*t)),
        }
    }
}

impl fmt::Display for IrProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.decls {
            let kw = if d.global { "global" } else { "alloca" };
            writeln!(f, "{kw} {} -> {} {}", d.reg, d.block, d.len)?;
        }
        writeln!(f, "entry {}", self.block_name(self.entry))?;
        writeln!(f, "exit {}", self.block_name(self.exit))?;
        for b in &self.blocks {
            writeln!(f, "block {}:", b.name)?;
            for i in &b.instrs {
                writeln!(f, "  {}", self.render_instr(i))?;
            }
        }
        for (r, set) in &self.ptsto {
            let names: Vec<&str> = set.iter().map(String::as_str).collect();
            writeln!(f, "ptsto {r} {{{}}}", names.join(", "))?;
        }
        Ok(())
    }
}
