//! Flow-sensitive typing of While programs.
//!
//! [`Mode::Base`] checks output-sensitive noninterference of the leak set.
//! [`Mode::ConstantTime`] additionally threads the leakage variable `xl`
//! through branch conditions and array indexes.
//!
//! Two departures from the textbook rules keep every environment well
//! formed. Loop bodies are typed under `(p_e, Γ1) ⊲ def^O(c)` rather than
//! the raw condition type, mirroring the conditional rule. Assignments to an
//! output charge `xl` with the index types of the pre-state before `⊲o`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::lattice::SecType;
use crate::secenv::{EnvError, Policy, TypeEnv, LEAK_VAR};
use crate::while_lang::{Cmd, Expr};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Base,
    #[serde(rename = "ct")]
    ConstantTime,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("loop `{condition}` did not stabilise within {bound} iterations")]
    IterationBound { condition: String, bound: usize },
    #[error("program mentions `{0}`, which the policy does not declare")]
    Undeclared(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoopStat {
    /// Preorder index of the loop among all loops of the program.
    pub id: usize,
    pub condition: String,
    /// Largest number of iterations any fixpoint computation of this loop
    /// needed.
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivationStep {
    pub label: String,
    pub pc: SecType,
    pub env: TypeEnv,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject { witness: SecType },
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

#[derive(Clone, Debug)]
pub struct TypingOutcome {
    pub env: TypeEnv,
    pub loops: Vec<LoopStat>,
    pub derivation: Vec<DerivationStep>,
}

#[derive(Clone, Debug)]
pub struct WhileReport {
    pub mode: Mode,
    pub verdict: Verdict,
    pub final_env: TypeEnv,
    pub loops: Vec<LoopStat>,
    pub derivation: Vec<DerivationStep>,
}

impl WhileReport {
    pub fn to_json(&self) -> serde_json::Value {
        let (verdict, witness) = match &self.verdict {
            Verdict::Accept => ("accept", serde_json::Value::Null),
            Verdict::Reject { witness } => {
                ("reject", serde_json::Value::String(witness.to_string()))
            }
        };
        serde_json::json!({
            "mode": self.mode,
            "verdict": verdict,
            "final_env": self.final_env.to_json(),
            "leak_witness": witness,
            "fixpoint_iterations": self.loops,
        })
    }
}

struct Checker<'a> {
    mode: Mode,
    policy: &'a Policy,
    bound: usize,
    loop_ids: HashMap<*const Cmd, usize>,
    loops: BTreeMap<usize, LoopStat>,
    derivation: Vec<DerivationStep>,
    /// Nesting depth of loop bodies currently being iterated; the
    /// derivation is only recorded outside them.
    quiet: usize,
    log: bool,
}

fn number_loops(c: &Cmd, ids: &mut HashMap<*const Cmd, usize>) {
    match c {
        Cmd::While(_, b) => {
            let n = ids.len();
            ids.insert(c as *const Cmd, n);
            number_loops(b, ids);
        }
        Cmd::Seq(a, b) | Cmd::If(_, a, b) => {
            number_loops(a, ids);
            number_loops(b, ids);
        }
        _ => {}
    }
}

fn index_fv(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for i in e.index_exprs() {
        i.collect_fv(&mut out);
    }
    out
}

impl<'a> Checker<'a> {
    fn record(&mut self, label: impl FnOnce() -> String, pc: &SecType, env: &TypeEnv) {
        if self.log && self.quiet == 0 {
            self.derivation.push(DerivationStep {
                label: label(),
                pc: pc.clone(),
                env: env.clone(),
            });
        }
    }

    fn ct(&self) -> bool {
        self.mode == Mode::ConstantTime
    }

    fn alpha(env: &TypeEnv, names: &BTreeSet<String>) -> Result<SecType, TypeError> {
        Ok(env.alpha_lookup_all(names.iter().map(String::as_str))?)
    }

    fn charge_xl(env: &mut TypeEnv, t: &SecType) -> Result<(), TypeError> {
        let cur = env.get(LEAK_VAR)?.join(t);
        env.set(LEAK_VAR, cur)?;
        Ok(())
    }

    fn assign(&self, pc: &SecType, env: &TypeEnv, x: &str, e: &Expr) -> Result<TypeEnv, TypeError> {
        let mut g = env.clone();
        if self.ct() {
            let leak = Self::alpha(env, &index_fv(e))?;
            Self::charge_xl(&mut g, &leak)?;
        }
        let fv = e.fv();
        if !self.policy.is_output(x) {
            let t = pc.join(&Self::alpha(&g, &fv)?);
            g.set(x, t)?;
            return Ok(g);
        }
        let old = g.get(x)?.clone();
        let pc = g.tri_level(pc, x)?;
        let mut g1 = g.tri_var(x)?;
        let others: BTreeSet<String> = fv.iter().filter(|v| *v != x).cloned().collect();
        let mut t = pc.join(&Self::alpha(&g1, &others)?);
        if fv.contains(x) {
            t.join_assign(&old);
        }
        g1.set(x, t)?;
        Ok(g1)
    }

    fn store(
        &self,
        pc: &SecType,
        env: &TypeEnv,
        a: &str,
        i: &Expr,
        e: &Expr,
    ) -> Result<TypeEnv, TypeError> {
        let mut g = env.clone();
        if self.ct() {
            let mut names = i.fv();
            names.extend(index_fv(e));
            let leak = Self::alpha(env, &names)?;
            Self::charge_xl(&mut g, &leak)?;
        }
        let mut names = i.fv();
        names.extend(e.fv());
        let t = pc.join(env.get(a)?).join(&Self::alpha(env, &names)?);
        g.set(a, t)?;
        Ok(g)
    }

    fn leak(&self, pc: &SecType, env: &TypeEnv, c: &Cmd) -> Result<TypeEnv, TypeError> {
        let mut names = BTreeSet::new();
        if let Cmd::Leak(ts) = c {
            for t in ts {
                match t {
                    crate::while_lang::LeakTerm::Branch(e)
                    | crate::while_lang::LeakTerm::Write(e) => e.collect_fv(&mut names),
                    crate::while_lang::LeakTerm::Read(es) => {
                        es.iter().for_each(|e| e.collect_fv(&mut names))
                    }
                }
            }
        }
        let t = pc.join(env.get(LEAK_VAR)?).join(&Self::alpha(env, &names)?);
        Ok(env.with(LEAK_VAR, t)?)
    }

    fn cmd(&mut self, pc: &SecType, env: &TypeEnv, c: &Cmd) -> Result<TypeEnv, TypeError> {
        match c {
            Cmd::Skip => Ok(env.clone()),
            Cmd::Assign(x, e) => {
                let out = self.assign(pc, env, x, e)?;
                self.record(|| format!("{x} := {e}"), pc, &out);
                Ok(out)
            }
            Cmd::Store(a, i, e) => {
                let out = self.store(pc, env, a, i, e)?;
                self.record(|| format!("{a}[{i}] := {e}"), pc, &out);
                Ok(out)
            }
            Cmd::Leak(_) => {
                let out = self.leak(pc, env, c)?;
                self.record(|| c.to_string(), pc, &out);
                Ok(out)
            }
            Cmd::Seq(a, b) => {
                let mid = self.cmd(pc, env, a)?;
                self.cmd(pc, &mid, b)
            }
            Cmd::If(e, a, b) => self.if_(pc, env, e, a, b),
            Cmd::While(e, body) => self.while_(pc, env, c, e, body),
        }
    }

    fn if_(
        &mut self,
        pc: &SecType,
        env: &TypeEnv,
        e: &Expr,
        a: &Cmd,
        b: &Cmd,
    ) -> Result<TypeEnv, TypeError> {
        let p_l = Self::alpha(env, &e.fv())?;
        let u1 = a.def_outputs(self.policy);
        let u2 = b.def_outputs(self.policy);
        let u: BTreeSet<&str> = u1.iter().chain(u2.iter()).map(String::as_str).collect();
        let p_prime = env.tri_level_set(&p_l, u.iter().copied())?;
        let mut g_in = env.clone();
        if self.ct() {
            Self::charge_xl(&mut g_in, &p_l)?;
        }
        let inner_pc = pc.join(&p_prime);
        self.record(|| format!("if {e}"), &inner_pc, &g_in);
        let g1 = self.cmd(&inner_pc, &g_in, a)?;
        let g2 = self.cmd(&inner_pc, &g_in, b)?;
        let left = g1.tri_set(u2.iter().map(String::as_str))?;
        let right = g2.tri_set(u1.iter().map(String::as_str))?;
        let out = left.join(&right)?;
        self.record(|| "fi".to_string(), pc, &out);
        Ok(out)
    }

    fn while_(
        &mut self,
        pc: &SecType,
        env: &TypeEnv,
        node: &Cmd,
        e: &Expr,
        body: &Cmd,
    ) -> Result<TypeEnv, TypeError> {
        let u_set = body.def_outputs(self.policy);
        let u: Vec<&str> = u_set.iter().map(String::as_str).collect();
        let fv = e.fv();
        let mut head_in = env.clone();
        if self.ct() {
            let p_l = Self::alpha(env, &fv)?;
            Self::charge_xl(&mut head_in, &p_l)?;
        }
        let base = head_in.tri_set(u.iter().copied())?;
        let mut g1 = base.clone();
        let mut iterations = 0usize;
        self.quiet += 1;
        let result = loop {
            iterations += 1;
            if iterations > self.bound {
                self.quiet -= 1;
                return Err(TypeError::IterationBound {
                    condition: e.to_string(),
                    bound: self.bound,
                });
            }
            let p_e = Self::alpha(&g1, &fv)?;
            let body_pc = pc.join(&g1.tri_level_set(&p_e, u.iter().copied())?);
            let mut body_in = g1.clone();
            if self.ct() {
                Self::charge_xl(&mut body_in, &p_e)?;
            }
            let mut g_out = self.cmd(&body_pc, &body_in, body)?;
            if self.ct() {
                Self::charge_xl(&mut g_out, &p_e)?;
            }
            let next = base.join(&g_out.tri_set(u.iter().copied())?)?;
            if next == g1 {
                break g1;
            }
            g1 = next;
        };
        self.quiet -= 1;
        let id = self
            .loop_ids
            .get(&(node as *const Cmd))
            .copied()
            .unwrap_or(usize::MAX);
        let stat = self.loops.entry(id).or_insert_with(|| LoopStat {
            id,
            condition: e.to_string(),
            iterations: 0,
        });
        stat.iterations = stat.iterations.max(iterations);
        self.record(
            || format!("while {e} (fixpoint after {iterations} iterations)"),
            pc,
            &result,
        );
        Ok(result)
    }
}

/// Iteration cap for a single loop fixpoint: `|universe| × |atoms| + 1`.
pub fn fixpoint_bound(policy: &Policy) -> usize {
    policy.universe_size() * policy.atom_count().max(1) + 1
}

fn check_declared(policy: &Policy, cmd: &Cmd) -> Result<(), TypeError> {
    for v in cmd.vars() {
        if v != LEAK_VAR && !policy.is_declared(&v) {
            return Err(TypeError::Undeclared(v));
        }
    }
    Ok(())
}

/// Types `cmd` from `env` under program counter `pc`.
pub fn type_cmd(
    mode: Mode,
    policy: &Arc<Policy>,
    pc: &SecType,
    env: &TypeEnv,
    cmd: &Cmd,
    log: bool,
) -> Result<TypingOutcome, TypeError> {
    check_declared(policy, cmd)?;
    let mut loop_ids = HashMap::new();
    number_loops(cmd, &mut loop_ids);
    let mut ck = Checker {
        mode,
        policy,
        bound: fixpoint_bound(policy),
        loop_ids,
        loops: BTreeMap::new(),
        derivation: Vec::new(),
        quiet: 0,
        log,
    };
    let env = ck.cmd(pc, env, cmd)?;
    Ok(TypingOutcome {
        env,
        loops: ck.loops.into_values().collect(),
        derivation: ck.derivation,
    })
}

/// Names whose final type exceeds what the policy allows.
pub fn leak_witness(
    mode: Mode,
    policy: &Policy,
    final_env: &TypeEnv,
) -> Result<SecType, TypeError> {
    let allowed = policy.allowed_leakage();
    let mut witness = SecType::bottom();
    let observed: Vec<&str> = match mode {
        Mode::Base => policy.leaks().iter().map(String::as_str).collect(),
        Mode::ConstantTime => vec![LEAK_VAR],
    };
    for l in observed {
        witness.join_assign(&final_env.get(l)?.difference(&allowed));
    }
    Ok(witness)
}

/// Types the program from the initial environment and decides the policy.
pub fn check_program(mode: Mode, policy: Arc<Policy>, cmd: &Cmd) -> Result<WhileReport, TypeError> {
    let init = TypeEnv::initial(policy.clone());
    let out = type_cmd(mode, &policy, &SecType::bottom(), &init, cmd, true)?;
    let witness = leak_witness(mode, &policy, &out.env)?;
    let verdict = if witness.is_bottom() {
        Verdict::Accept
    } else {
        Verdict::Reject { witness }
    };
    Ok(WhileReport {
        mode,
        verdict,
        final_env: out.env,
        loops: out.loops,
        derivation: out.derivation,
    })
}
