//! Type system for the IR and its Kildall fixpoint.
//!
//! Environments range over registers, memory blocks and `xl`. Each
//! instruction has a transfer function; environments flowing along a CFG
//! edge into `b` are first closed under `⊲` for the outputs assigned on the
//! alternative paths into `b` (its Hammock region), then joined.
//!
//! Output updates take the pre-state and then apply `⊲r`, so a register or
//! block never ends up depending symbolically on itself.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::sync::Arc;

use serde_json::json;
use thiserror::Error;

use crate::ir::{BlockId, Instr, IrProgram, Operand};
use crate::ir_graphs::{hammock_region, GraphError, Graphs};
use crate::lattice::SecType;
use crate::secenv::{EnvError, Policy, PolicyError, PolicyFile, TypeEnv, LEAK_VAR};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrTypeError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("dataflow did not stabilise within {0} block visits")]
    IterationBound(usize),
}

/// Builds the IR policy: the universe is every register and memory block.
/// Inputs must be memory blocks.
pub fn ir_policy(p: &IrProgram, file: &PolicyFile) -> Result<Arc<Policy>, PolicyError> {
    for i in &file.inputs {
        if !p.memory.contains_key(i) {
            return Err(PolicyError::Undeclared {
                role: "memory input",
                name: i.clone(),
            });
        }
    }
    let names: Vec<String> = p.registers.iter().chain(p.memory.keys()).cloned().collect();
    Ok(Arc::new(Policy::new(
        names,
        Vec::<(String, usize)>::new(),
        file.inputs.clone(),
        file.outputs.clone(),
        file.leaks.clone(),
    )?))
}

/// Memory blocks start at their own atom; registers start at `⊥` because
/// their initial contents are fixed (a block address or 0).
pub fn initial_env(p: &IrProgram, policy: &Arc<Policy>) -> TypeEnv {
    let mut g = TypeEnv::initial(policy.clone());
    for r in &p.registers {
        g.set(r, SecType::bottom())
            .expect("register is in the universe");
    }
    g
}

pub struct IrChecker<'a> {
    pub prog: &'a IrProgram,
    pub policy: Arc<Policy>,
    pub graphs: Graphs,
    /// Outputs assigned by each block, stores through possibly-output
    /// blocks included.
    defs: Vec<BTreeSet<String>>,
    /// `A` for each CFG edge.
    pub edge_a: BTreeMap<(BlockId, BlockId), BTreeSet<String>>,
    mutation: Option<Mutation>,
}

/// Deliberately broken variants of the rules, used to check that the
/// soundness harness notices them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    /// Omit `τ0` from the type of an operation.
    DropTau0InOp,
    /// Do not charge `xl` with the branch register at `cond`.
    SkipCondLeak,
    /// Assign outputs without the `⊲` substitution.
    SkipOutputSubst,
}

fn operand_names(o: &Operand) -> Option<&str> {
    match o {
        Operand::Reg(r) => Some(r),
        _ => None,
    }
}

impl<'a> IrChecker<'a> {
    pub fn new(prog: &'a IrProgram, policy: Arc<Policy>) -> Result<Self, IrTypeError> {
        Self::with_graphs(prog, policy, Graphs::new(prog)?)
    }

    pub fn with_graphs(
        prog: &'a IrProgram,
        policy: Arc<Policy>,
        graphs: Graphs,
    ) -> Result<Self, IrTypeError> {
        let defs: Vec<BTreeSet<String>> = prog
            .blocks
            .iter()
            .map(|b| {
                let mut out = BTreeSet::new();
                for i in &b.instrs {
                    match i {
                        Instr::Op { dest, .. } | Instr::Load { dest, .. } => {
                            if policy.is_output(dest) {
                                out.insert(dest.clone());
                            }
                        }
                        Instr::Store { addr, .. } => {
                            out.extend(
                                graphs
                                    .pts
                                    .of_operand(addr)
                                    .into_iter()
                                    .filter(|m| policy.is_output(m)),
                            );
                        }
                        _ => {}
                    }
                }
                out
            })
            .collect();
        let mut edge_a = BTreeMap::new();
        for c in graphs.dom.live().iter().copied() {
            for b in prog.successors(c) {
                let a = match graphs.dom.idom[b] {
                    Some(bp) => hammock_region(prog, bp, b, c)
                        .into_iter()
                        .flat_map(|m| defs[m].iter().cloned())
                        .collect(),
                    None => BTreeSet::new(),
                };
                edge_a.insert((c, b), a);
            }
        }
        Ok(IrChecker {
            prog,
            policy,
            graphs,
            defs,
            edge_a,
            mutation: None,
        })
    }

    pub fn with_mutation(mut self, m: Mutation) -> Self {
        self.mutation = Some(m);
        self
    }

    pub fn block_defs(&self, b: BlockId) -> &BTreeSet<String> {
        &self.defs[b]
    }

    fn alpha_operand(&self, env: &TypeEnv, o: &Operand) -> Result<SecType, IrTypeError> {
        Ok(match operand_names(o) {
            Some(r) => env.alpha_lookup(r)?,
            None => SecType::bottom(),
        })
    }

    /// `⊔ Γ[α](br(b'))` over the blocks `b'` that `b` depends on.
    pub fn tau0(&self, env: &TypeEnv, b: BlockId) -> Result<SecType, IrTypeError> {
        let mut t = SecType::bottom();
        for &d in &self.graphs.deps[b] {
            if let Some(r) = crate::ir_graphs::br(self.prog, d) {
                t.join_assign(&env.alpha_lookup(r)?);
            }
        }
        Ok(t)
    }

    fn charge_xl(env: &mut TypeEnv, t: &SecType) -> Result<(), IrTypeError> {
        let cur = env.get(LEAK_VAR)?.join(t);
        env.set(LEAK_VAR, cur)?;
        Ok(())
    }

    /// Assigns `t`, computed on the pre-state, to `dest`.
    fn assign(&self, env: TypeEnv, dest: &str, t: SecType) -> Result<TypeEnv, IrTypeError> {
        if !self.policy.is_output(dest) || self.mutation == Some(Mutation::SkipOutputSubst) {
            return Ok(env.with(dest, t)?);
        }
        let t = env.tri_level(&t, dest)?;
        let mut g1 = env.tri_var(dest)?;
        g1.set(dest, t)?;
        Ok(g1)
    }

    /// Effect of the instruction at `(b, k)` on `env`.
    pub fn transfer(
        &self,
        env: &TypeEnv,
        b: BlockId,
        instr: &Instr,
    ) -> Result<TypeEnv, IrTypeError> {
        match instr {
            Instr::Op { dest, args, .. } => {
                let mut t = match self.mutation {
                    Some(Mutation::DropTau0InOp) => SecType::bottom(),
                    _ => self.tau0(env, b)?,
                };
                for a in args {
                    t.join_assign(&self.alpha_operand(env, a)?);
                }
                self.assign(env.clone(), dest, t)
            }
            Instr::Load { dest, addr } => {
                let t1 = self.alpha_operand(env, addr)?.join(&self.tau0(env, b)?);
                let mut t2 = SecType::bottom();
                for m in self.graphs.pts.of_operand(addr) {
                    t2.join_assign(&env.alpha_lookup(&m)?);
                }
                let mut g = env.clone();
                Self::charge_xl(&mut g, &t1)?;
                self.assign(g, dest, t2.join(&t1))
            }
            Instr::Store { val, addr } => {
                let a_m = self.graphs.pts.of_operand(addr);
                let a0: Vec<&str> = a_m
                    .iter()
                    .map(String::as_str)
                    .filter(|m| self.policy.is_output(m))
                    .collect();
                let t1 = self.alpha_operand(env, addr)?.join(&self.tau0(env, b)?);
                let t2 = self.alpha_operand(env, val)?;
                let mut g = env.clone();
                Self::charge_xl(&mut g, &t1)?;
                let t1 = g.tri_level_set(&t1, a0.iter().copied())?;
                let t2 = g.tri_level_set(&t2, a0.iter().copied())?;
                let mut g1 = g.tri_set(a0.iter().copied())?;
                let add = t2.join(&t1);
                for m in &a_m {
                    let cur = g1.get(m)?.join(&add);
                    g1.set(m, cur)?;
                }
                Ok(g1)
            }
            Instr::Cond { .. } if self.mutation == Some(Mutation::SkipCondLeak) => Ok(env.clone()),
            Instr::Cond { reg, .. } => {
                let mut g = env.clone();
                Self::charge_xl(&mut g, &env.alpha_lookup(reg)?)?;
                Ok(g)
            }
            Instr::Goto(_) => Ok(env.clone()),
        }
    }

    /// Environments at every control point of `b`: entry first, then after
    /// each instruction.
    pub fn replay(&self, b: BlockId, entry: &TypeEnv) -> Result<Vec<TypeEnv>, IrTypeError> {
        let mut out = Vec::with_capacity(self.prog.blocks[b].instrs.len() + 1);
        out.push(entry.clone());
        for i in &self.prog.blocks[b].instrs {
            let next = self.transfer(out.last().expect("non-empty"), b, i)?;
            out.push(next);
        }
        Ok(out)
    }

    fn block_out(&self, b: BlockId, entry: &TypeEnv) -> Result<TypeEnv, IrTypeError> {
        let mut g = entry.clone();
        for i in &self.prog.blocks[b].instrs {
            g = self.transfer(&g, b, i)?;
        }
        Ok(g)
    }

    /// `|points| × |atoms| × |variables| + 1`.
    pub fn visit_bound(&self) -> usize {
        let points = self.prog.instr_count() + self.prog.blocks.len();
        points * self.policy.atom_count().max(1) * self.policy.universe_size() + 1
    }

    /// Worklist fixpoint from `init` at the entry block.
    pub fn kildall(&self, init: &TypeEnv) -> Result<FlowState, IrTypeError> {
        let n = self.prog.blocks.len();
        let mut entry: Vec<Option<TypeEnv>> = vec![None; n];
        entry[self.prog.entry] = Some(init.clone());
        let mut queue = VecDeque::from([self.prog.entry]);
        let mut queued = vec![false; n];
        queued[self.prog.entry] = true;
        let bound = self.visit_bound();
        let mut visits = 0usize;
        while let Some(b) = queue.pop_front() {
            queued[b] = false;
            visits += 1;
            if visits > bound {
                return Err(IrTypeError::IterationBound(bound));
            }
            let start = entry[b]
                .clone()
                .expect("queued blocks have an entry environment");
            let out = self.block_out(b, &start)?;
            for s in self.prog.successors(b) {
                let a = &self.edge_a[&(b, s)];
                let incoming = out.tri_set(a.iter().map(String::as_str))?;
                let merged = match &entry[s] {
                    Some(cur) => cur.join(&incoming)?,
                    None => incoming,
                };
                if entry[s].as_ref() != Some(&merged) {
                    entry[s] = Some(merged);
                    if !queued[s] {
                        queued[s] = true;
                        queue.push_back(s);
                    }
                }
            }
        }
        Ok(FlowState {
            init: init.clone(),
            entry,
            visits,
        })
    }

    /// Re-verifies every edge, the entry included, and the well-formedness of
    /// every control point.
    pub fn check_welltyped(&self, state: &FlowState) -> Result<WellTyped, IrTypeError> {
        let mut certificates = Vec::new();
        let mut failure = None;
        let entry_env = state.entry[self.prog.entry]
            .as_ref()
            .expect("entry is always reached");
        let ok = state.init.leq_r(entry_env)?;
        if !ok {
            failure
                .get_or_insert_with(|| "initial environment does not flow into entry".to_string());
        }
        certificates.push(Certificate {
            from: None,
            to: self.prog.entry,
            gamma: state.init.clone(),
            a: BTreeSet::new(),
            ok,
        });
        for (b, start) in state.entry.iter().enumerate() {
            let Some(start) = start else { continue };
            let points = self.replay(b, start)?;
            for (k, g) in points.iter().enumerate() {
                if let Some(cycle) = g.find_cycle() {
                    failure.get_or_insert_with(|| {
                        format!(
                            "environment at {}:{k} is not well formed ({cycle:?})",
                            self.prog.block_name(b)
                        )
                    });
                }
            }
            let gamma = points.last().expect("non-empty").clone();
            for s in self.prog.successors(b) {
                let a = self.edge_a[&(b, s)].clone();
                let target = state.entry[s]
                    .as_ref()
                    .expect("successor of a reached block is reached");
                let ok = match gamma.tri_set(a.iter().map(String::as_str)) {
                    Ok(closed) => closed.leq_r(target)?,
                    Err(EnvError::IllFormed(_)) => false,
                    Err(e) => return Err(e.into()),
                };
                if !ok {
                    failure.get_or_insert_with(|| {
                        format!(
                            "edge {} -> {} is not certified",
                            self.prog.block_name(b),
                            self.prog.block_name(s)
                        )
                    });
                }
                certificates.push(Certificate {
                    from: Some(b),
                    to: s,
                    gamma: gamma.clone(),
                    a,
                    ok,
                });
            }
        }
        Ok(WellTyped {
            ok: failure.is_none(),
            failure,
            certificates,
        })
    }

    pub fn exit_env(&self, state: &FlowState) -> Result<TypeEnv, IrTypeError> {
        let start = state.entry[self.prog.exit]
            .as_ref()
            .expect("exit is reachable from entry");
        self.block_out(self.prog.exit, start)
    }
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub init: TypeEnv,
    /// Environment at `(b, 0)`; `None` for blocks never reached.
    pub entry: Vec<Option<TypeEnv>>,
    pub visits: usize,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    /// `None` for the virtual edge carrying the initial environment.
    pub from: Option<BlockId>,
    pub to: BlockId,
    pub gamma: TypeEnv,
    pub a: BTreeSet<String>,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct WellTyped {
    pub ok: bool,
    pub failure: Option<String>,
    pub certificates: Vec<Certificate>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IrVerdict {
    Accept,
    /// The exit leakage exceeds the inputs and outputs.
    Reject {
        witness: SecType,
    },
    /// No certified family of environments was found.
    NotWellTyped {
        reason: String,
    },
}

impl IrVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, IrVerdict::Accept)
    }
}

#[derive(Clone, Debug)]
pub struct IrReport {
    pub verdict: IrVerdict,
    pub exit_env: Option<TypeEnv>,
    pub flow: Option<FlowState>,
    pub welltyped: Option<WellTyped>,
}

impl IrReport {
    pub fn to_json(&self, p: &IrProgram) -> serde_json::Value {
        let (verdict, witness, reason) = match &self.verdict {
            IrVerdict::Accept => ("accept", None, None),
            IrVerdict::Reject { witness } => ("reject", Some(witness.to_string()), None),
            IrVerdict::NotWellTyped { reason } => ("reject", None, Some(reason.clone())),
        };
        let blocks: serde_json::Map<String, serde_json::Value> = self
            .flow
            .iter()
            .flat_map(|f| f.entry.iter().enumerate())
            .filter_map(|(b, e)| {
                e.as_ref()
                    .map(|e| (p.block_name(b).to_string(), e.to_json()))
            })
            .collect();
        let certs: Vec<serde_json::Value> = self
            .welltyped
            .iter()
            .flat_map(|w| w.certificates.iter())
            .map(|c| {
                json!({
                    "from": c.from.map(|b| p.block_name(b).to_string()),
                    "to": p.block_name(c.to),
                    "gamma": c.gamma.to_json(),
                    "A": c.a,
                    "ok": c.ok,
                })
            })
            .collect();
        json!({
            "verdict": verdict,
            "witness": witness,
            "not_well_typed": reason,
            "blocks": blocks,
            "exit_env": self.exit_env.as_ref().map(TypeEnv::to_json),
            "certificates": certs,
            "kildall_visits": self.flow.as_ref().map(|f| f.visits),
        })
    }
}

/// Decides constant-time of `p` for the policy.
pub fn ir_verdict(p: &IrProgram, policy: Arc<Policy>) -> Result<IrReport, IrTypeError> {
    let ck = IrChecker::new(p, policy.clone())?;
    ir_verdict_with(&ck)
}

pub fn ir_verdict_with(ck: &IrChecker<'_>) -> Result<IrReport, IrTypeError> {
    let init = initial_env(ck.prog, &ck.policy);
    let flow = match ck.kildall(&init) {
        Ok(f) => f,
        Err(IrTypeError::Env(EnvError::IllFormed(c))) => {
            return Ok(IrReport {
                verdict: IrVerdict::NotWellTyped {
                    reason: format!("output dependency cycle through {c:?}"),
                },
                exit_env: None,
                flow: None,
                welltyped: None,
            })
        }
        Err(e) => return Err(e),
    };
    let wt = ck.check_welltyped(&flow)?;
    let exit_env = ck.exit_env(&flow)?;
    let verdict = if let Some(reason) = &wt.failure {
        IrVerdict::NotWellTyped {
            reason: reason.clone(),
        }
    } else {
        let witness = exit_env
            .get(LEAK_VAR)?
            .difference(&ck.policy.allowed_leakage());
        if witness.is_bottom() {
            IrVerdict::Accept
        } else {
            IrVerdict::Reject { witness }
        }
    };
    Ok(IrReport {
        verdict,
        exit_env: Some(exit_env),
        flow: Some(flow),
        welltyped: Some(wt),
    })
}

/// Text dump of every control point's environment, block by block.
pub fn render_envs(ck: &IrChecker<'_>, flow: &FlowState) -> Result<String, IrTypeError> {
    let mut out = String::new();
    for (b, start) in flow.entry.iter().enumerate() {
        let Some(start) = start else { continue };
        let points = ck.replay(b, start)?;
        let _ = writeln!(out, "== block {}", ck.prog.block_name(b));
        let _ = writeln!(out, "-- entry");
        out.push_str(&points[0].to_string());
        for (i, g) in ck.prog.blocks[b].instrs.iter().zip(points.iter().skip(1)) {
            let _ = writeln!(out, "-- {}", ck.prog.render_instr(i));
            out.push_str(&g.to_string());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_ir;

    fn check(src: &str, pol: &str) -> (IrProgram, IrReport) {
        let p = parse_ir(src).unwrap();
        let policy = ir_policy(&p, &PolicyFile::from_json(pol).unwrap()).unwrap();
        let r = ir_verdict(&p, policy).unwrap();
        (p, r)
    }

    const DIAMOND: &str = "\
global @m -> h 1
global @o -> out 1
entry a
exit d
block a:
  %v = load @m
  %c = op eq %v 1
  cond %c b c
block b:
  store 1 @o
  goto d
block c:
  goto d
block d:
";

    #[test]
    fn empty_program_is_accepted() {
        let (_, r) = check("entry a\nexit end\nblock a:\n goto end\nblock end:\n", "{}");
        assert_eq!(r.verdict, IrVerdict::Accept);
    }

    #[test]
    fn secret_branch_leaks_through_jump() {
        let (_, r) = check(DIAMOND, r#"{"outputs":["out"]}"#);
        assert_eq!(
            r.verdict,
            IrVerdict::Reject {
                witness: "{h}".parse().unwrap()
            }
        );
        let (_, r) = check(DIAMOND, r#"{"inputs":["h"]}"#);
        assert_eq!(r.verdict, IrVerdict::Accept);
    }

    #[test]
    fn merge_applies_hammock_outputs() {
        let (p, r) = check(DIAMOND, r#"{"inputs":["h"],"outputs":["out"]}"#);
        assert!(r.verdict.is_accept());
        let wt = r.welltyped.unwrap();
        let c_to_d = wt
            .certificates
            .iter()
            .find(|c| c.from == p.block_id("c") && Some(c.to) == p.block_id("d"))
            .unwrap();
        assert_eq!(c_to_d.a, BTreeSet::from(["out".to_string()]));
        assert!(wt.ok);
    }

    #[test]
    fn self_loop_stabilises() {
        let src = "entry a\nexit e\nblock a:\n %c = op eq 1 1\n cond %c a e\nblock e:\n";
        let (_, r) = check(src, "{}");
        assert!(r.verdict.is_accept());
        assert!(r.flow.unwrap().visits <= 3);
    }
}
