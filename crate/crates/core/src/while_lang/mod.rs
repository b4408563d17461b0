//! The While language with arrays: syntax, parser and labeled interpreter.

pub mod ast;
pub mod interp;
pub mod parser;

pub use ast::{BinOp, Cmd, Expr, LeakTerm};
pub use interp::{run, run_unlabeled, RunError, RunOutcome, Store};
pub use parser::{parse_cmd, parse_expr, parse_program, ParseError};
