//! Type-based verification of output-sensitive noninterference and
//! output-sensitive constant-time.
//!
//! The crate covers two languages. A structured While language with arrays
//! is checked by flow-sensitive typing rules ([`while_typing`]); a small
//! SSA-style IR with explicit memory blocks is checked by a Kildall-style
//! dataflow analysis ([`ir_typing`]). Exhaustive small-domain oracles
//! ([`oracle`]) and random program generators ([`fuzz`]) test the checkers
//! against the semantic definitions.

pub mod cli;
pub mod fuzz;
pub mod instrument;
pub mod ir;
pub mod ir_graphs;
pub mod ir_typing;
pub mod lattice;
pub mod oracle;
pub mod secenv;
pub mod trace;
pub mod while_lang;
pub mod while_typing;

pub use lattice::{Atom, AtomKind, SecType};
pub use secenv::{Policy, PolicyFile, TypeEnv, LEAK_VAR};
