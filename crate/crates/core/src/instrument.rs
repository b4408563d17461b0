//! Leakage instrumentation.
//!
//! [`instrument`] makes every observation of the labeled semantics explicit
//! as an update of the program variable `xl`, so that constant-time of `c`
//! can be checked as plain noninterference of `xl` in the instrumented
//! program. [`check_equivalences`] cross-checks both directions: typing of
//! the two programs and their runtime traces.

use std::sync::Arc;

use thiserror::Error;

use crate::lattice::SecType;
use crate::secenv::{Policy, TypeEnv, LEAK_VAR};
use crate::while_lang::interp::{run, RunError, Store};
use crate::while_lang::{Cmd, Expr, LeakTerm};
use crate::while_typing::{type_cmd, Mode, TypeError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstrumentError {
    #[error("source program already mentions `{LEAK_VAR}`")]
    LeakVarInSource,
    #[error(transparent)]
    Type(#[from] TypeError),
}

fn reads(e: &Expr) -> LeakTerm {
    LeakTerm::Read(e.index_exprs().into_iter().cloned().collect())
}

fn omega(c: &Cmd) -> Cmd {
    match c {
        Cmd::Skip => Cmd::Skip,
        Cmd::Assign(_, e) => Cmd::seq(Cmd::Leak(vec![reads(e)]), c.clone()),
        Cmd::Store(_, i, e) => Cmd::seq(
            Cmd::Leak(vec![LeakTerm::Write(i.clone()), reads(e)]),
            c.clone(),
        ),
        Cmd::Seq(a, b) => Cmd::seq(omega(a), omega(b)),
        Cmd::If(e, a, b) => Cmd::seq(
            Cmd::Leak(vec![LeakTerm::Branch(e.clone()), reads(e)]),
            Cmd::if_(e.clone(), omega(a), omega(b)),
        ),
        Cmd::While(e, body) => {
            let test = Cmd::Leak(vec![LeakTerm::Branch(e.clone()), reads(e)]);
            Cmd::seq(
                test.clone(),
                Cmd::while_(e.clone(), Cmd::seq(omega(body), test)),
            )
        }
        Cmd::Leak(_) => c.clone(),
    }
}

/// Instruments `c`; fails when `c` already refers to `xl`.
pub fn instrument(c: &Cmd) -> Result<Cmd, InstrumentError> {
    if c.contains_leak() || c.vars().contains(LEAK_VAR) {
        return Err(InstrumentError::LeakVarInSource);
    }
    Ok(omega(c))
}

/// Removes every leak update, undoing [`instrument`].
pub fn erase(c: &Cmd) -> Cmd {
    match c {
        Cmd::Leak(_) => Cmd::Skip,
        Cmd::Seq(a, b) => match (a.as_ref(), b.as_ref()) {
            (Cmd::Leak(_), _) => erase(b),
            (_, Cmd::Leak(_)) => erase(a),
            _ => Cmd::seq(erase(a), erase(b)),
        },
        Cmd::If(e, a, b) => Cmd::if_(e.clone(), erase(a), erase(b)),
        Cmd::While(e, b) => Cmd::while_(e.clone(), erase(b)),
        other => other.clone(),
    }
}

/// A variable whose final type differs between the two typings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvMismatch {
    pub var: String,
    pub constant_time: SecType,
    pub instrumented: SecType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceMismatch {
    pub store: Store,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub env_mismatches: Vec<EnvMismatch>,
    pub trace_mismatches: Vec<TraceMismatch>,
    /// Stores whose runs errored or timed out and were therefore skipped.
    pub skipped_runs: usize,
}

impl EquivalenceReport {
    pub fn is_clean(&self) -> bool {
        self.env_mismatches.is_empty() && self.trace_mismatches.is_empty()
    }
}

/// Compares the constant-time typing of `c` against the base typing of its
/// instrumentation, and for each store the labeled trace of `c` against the
/// final `xl` of the instrumented run.
pub fn check_equivalences(
    c: &Cmd,
    policy: &Arc<Policy>,
    stores: &[Store],
    cap: u64,
) -> Result<EquivalenceReport, InstrumentError> {
    let w = instrument(c)?;
    let init = TypeEnv::initial(policy.clone());
    let bot = SecType::bottom();
    let ct = type_cmd(Mode::ConstantTime, policy, &bot, &init, c, false)?.env;
    let base = type_cmd(Mode::Base, policy, &bot, &init, &w, false)?.env;
    let mut report = EquivalenceReport::default();
    for ((var, a), (_, b)) in ct.iter().zip(base.iter()) {
        if a != b {
            report.env_mismatches.push(EnvMismatch {
                var: var.to_string(),
                constant_time: a.clone(),
                instrumented: b.clone(),
            });
        }
    }
    for s in stores {
        let mut s0 = s.clone();
        s0.xl.clear();
        let plain = run(c, s0.clone(), cap);
        let inst = run(&w, s0.clone(), cap.saturating_mul(2));
        match (plain, inst) {
            (Ok(p), Ok(i)) => {
                let mut expect = p.store.clone();
                expect.xl = p.trace.clone();
                if expect != i.store {
                    report.trace_mismatches.push(TraceMismatch {
                        store: s0,
                        detail: format!(
                            "labeled trace {} but instrumented xl {}",
                            crate::trace::render_trace(&p.trace),
                            crate::trace::render_trace(&i.store.xl)
                        ),
                    });
                }
            }
            (Err(RunError::Timeout(_)), _) | (_, Err(RunError::Timeout(_))) => {
                report.skipped_runs += 1
            }
            (Err(a), Err(b)) if a == b => report.skipped_runs += 1,
            (a, b) => report.trace_mismatches.push(TraceMismatch {
                store: s0,
                detail: format!("runs disagree on failure: {:?} vs {:?}", a.err(), b.err()),
            }),
        }
    }
    Ok(report)
}
