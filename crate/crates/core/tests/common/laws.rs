//! Randomised algebraic laws. Each law draws its own case from the RNG and
//! reports a violation as `Err`.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use oscta::fuzz::{gen_ir, gen_while, IrGen, WhileGen};
use oscta::ir::{BlockId, Instr, IrProgram};
use oscta::ir_graphs::{compute_dominators, dep, hammock_region, skeleton};
use oscta::ir_typing::{ir_policy, IrChecker};
use oscta::while_typing::{type_cmd, Mode};
use oscta::{Atom, Policy, SecType, TypeEnv};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub type Law = fn(&mut StdRng) -> Result<(), String>;

pub const LAWS: &[(&str, Law)] = &[
    ("lattice laws", lattice_laws),
    ("atom assumptions", atom_assumptions),
    ("restricted order inside order", leq_r_inside_leq),
    ("substitution identities", subst_identities),
    ("triangle order independence", triangle_order_independence),
    ("triangle keeps well-formedness", triangle_well_formed),
    ("triangle monotone", triangle_monotone),
    (
        "triangle idempotent under restricted order",
        triangle_absorbs,
    ),
    ("while typing monotone", while_typing_monotone),
    ("ir transfer monotone", ir_transfer_monotone),
];

const REAL: &[&str] = &["x", "y", "z", "o1", "o2", "o3", "o4"];
const OUTS: &[&str] = &["o1", "o2", "o3", "o4"];

pub fn algebra_policy() -> Arc<Policy> {
    Arc::new(Policy::new(REAL.iter().copied(), [], ["x"], OUTS.iter().copied(), ["y"]).unwrap())
}

pub fn random_type(rng: &mut StdRng, density: f64) -> SecType {
    let mut t = SecType::bottom();
    for r in REAL {
        if rng.gen_bool(density) {
            t.insert(Atom::real(r));
        }
    }
    for o in OUTS {
        if rng.gen_bool(density) {
            t.insert(Atom::symbolic(o));
        }
    }
    t
}

/// A random well-formed environment: outputs are put in a random order and
/// `~a` may only occur in `Γ(b)` when `a` comes before `b`.
pub fn random_wf_env(rng: &mut StdRng, policy: &Arc<Policy>, density: f64) -> TypeEnv {
    let names: Vec<String> = policy.names().map(str::to_string).collect();
    let mut outs: Vec<String> = policy.outputs().iter().cloned().collect();
    outs.shuffle(rng);
    let pos = |o: &str| outs.iter().position(|x| x == o);
    let mut env = TypeEnv::initial(policy.clone());
    let keys: Vec<String> = env.iter().map(|(k, _)| k.to_string()).collect();
    for v in &keys {
        let mut t = SecType::bottom();
        for n in &names {
            if rng.gen_bool(density) {
                t.insert(Atom::real(n));
            }
        }
        for o in &outs {
            let allowed = match pos(v) {
                Some(pv) => pos(o).unwrap() < pv,
                None => true,
            };
            if allowed && rng.gen_bool(density) {
                t.insert(policy.alpha(o));
            }
        }
        env.set(v, t).unwrap();
    }
    env
}

/// Drops each atom with probability one half.
pub fn random_subtype(rng: &mut StdRng, t: &SecType) -> SecType {
    t.atoms().filter(|_| rng.gen_bool(0.5)).cloned().collect()
}

/// Drops real atoms only, so the result is `⊑_r` the input.
pub fn random_restricted_subtype(rng: &mut StdRng, t: &SecType) -> SecType {
    t.atoms()
        .filter(|a| a.is_symbolic() || rng.gen_bool(0.5))
        .cloned()
        .collect()
}

pub fn random_subenv(rng: &mut StdRng, e: &TypeEnv) -> TypeEnv {
    let mut out = e.clone();
    for (k, v) in e.iter() {
        out.set(k, random_subtype(rng, v)).unwrap();
    }
    out
}

fn random_outputs(rng: &mut StdRng, policy: &Policy) -> Vec<String> {
    policy
        .outputs()
        .iter()
        .filter(|_| rng.gen_bool(0.5))
        .cloned()
        .collect()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn lattice_laws(rng: &mut StdRng) -> Result<(), String> {
    let (a, b, c) = (
        random_type(rng, 0.3),
        random_type(rng, 0.3),
        random_type(rng, 0.3),
    );
    let ctx = || format!("a={a} b={b} c={c}");
    ensure(a.join(&b) == b.join(&a), || {
        format!("join not commutative: {}", ctx())
    })?;
    ensure(a.join(&b).join(&c) == a.join(&b.join(&c)), || {
        format!("join not associative: {}", ctx())
    })?;
    ensure(a.join(&a) == a, || {
        format!("join not idempotent: {}", ctx())
    })?;
    ensure(a.join(&SecType::bottom()) == a, || {
        format!("bottom not neutral: {}", ctx())
    })?;
    ensure(a.leq(&a), || format!("leq not reflexive: {}", ctx()))?;
    ensure(a.leq(&b) == (a.join(&b) == b), || {
        format!("leq disagrees with join: {}", ctx())
    })?;
    ensure(!(a.leq(&b) && b.leq(&a)) || a == b, || {
        format!("leq not antisymmetric: {}", ctx())
    })?;
    ensure(!(a.leq(&b) && b.leq(&c)) || a.leq(&c), || {
        format!("leq not transitive: {}", ctx())
    })?;
    ensure(a.leq(&a.join(&b)) && b.leq(&a.join(&b)), || {
        format!("join not an upper bound: {}", ctx())
    })?;
    ensure(!(a.leq(&c) && b.leq(&c)) || a.join(&b).leq(&c), || {
        format!("join not least: {}", ctx())
    })
}

pub fn atom_assumptions(rng: &mut StdRng) -> Result<(), String> {
    let o1 = Atom::symbolic(OUTS.choose(rng).unwrap());
    let o2 = Atom::symbolic(OUTS.choose(rng).unwrap());
    let (s1, s2) = (
        SecType::singleton(o1.clone()),
        SecType::singleton(o2.clone()),
    );
    ensure(o1 == o2 || (!s1.leq(&s2) && !s2.leq(&s1)), || {
        format!("{o1} and {o2} comparable")
    })?;
    let (t1, t2) = (random_type(rng, 0.3), random_type(rng, 0.3));
    if s1.leq(&t1.join(&t2)) {
        ensure(s1.leq(&t1) || s1.leq(&t2), || {
            format!("{o1} below {t1} join {t2} but below neither")
        })?;
    }
    if s1.leq(&t1) {
        let rest = t1.difference(&s1);
        ensure(rest.join(&s1) == t1 && !s1.leq(&rest), || {
            format!("{t1} has no decomposition around {o1}")
        })?;
    }
    Ok(())
}

pub fn leq_r_inside_leq(rng: &mut StdRng) -> Result<(), String> {
    let a = random_type(rng, 0.4);
    let b = if rng.gen_bool(0.5) {
        a.join(&random_type(rng, 0.2))
    } else {
        random_type(rng, 0.4)
    };
    ensure(!a.leq_r(&b) || a.leq(&b), || {
        format!("{a} ⊑_r {b} but not ⊑")
    })?;
    ensure(a.leq_r(&a), || format!("⊑_r not reflexive at {a}"))?;
    let policy = algebra_policy();
    let e2 = random_wf_env(rng, &policy, 0.3);
    let e1 = random_subenv(rng, &e2);
    ensure(!e1.leq_r(&e2).unwrap() || e1.leq(&e2).unwrap(), || {
        "environment ⊑_r without ⊑".into()
    })
}

pub fn subst_identities(rng: &mut StdRng) -> Result<(), String> {
    let (a, b, r) = (
        random_type(rng, 0.3),
        random_type(rng, 0.3),
        random_type(rng, 0.3),
    );
    let o = Atom::symbolic(OUTS.choose(rng).unwrap());
    let s = |t: &SecType, r: &SecType| t.subst(&o, r).unwrap();
    ensure(s(&a, &SecType::singleton(o.clone())) == a, || {
        format!("{a}[{o}/{o}] changed")
    })?;
    let without = a.difference(&SecType::singleton(o.clone()));
    ensure(s(&without, &r) == without, || {
        format!("substituting absent {o} changed {without}")
    })?;
    let expect = if a.contains(&o) {
        without.join(&r)
    } else {
        a.clone()
    };
    ensure(s(&a, &r) == expect, || format!("{a}[{r}/{o}] wrong"))?;
    ensure(s(&a.join(&b), &r) == s(&a, &r).join(&s(&b, &r)), || {
        format!("subst does not distribute over {a} ⊔ {b}")
    })?;
    if a.leq(&b) {
        ensure(s(&a, &r).leq(&s(&b, &r)), || {
            format!("subst not monotone on {a} ⊑ {b}")
        })?;
    }
    ensure(a.subst(&Atom::real("x"), &r).is_err(), || {
        "substituting a real atom accepted".into()
    })
}

/// Permutations of `xs` in which no earlier name reaches a later one.
fn compatible_orders(env: &TypeEnv, xs: &[String]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    permute(&mut xs.to_vec(), 0, &mut |perm| {
        let ok = (0..perm.len())
            .all(|j| (j + 1..perm.len()).all(|k| !env.reachable_from(&perm[j]).contains(&perm[k])));
        if ok {
            out.push(perm.to_vec());
        }
    });
    out
}

fn permute(xs: &mut Vec<String>, k: usize, f: &mut impl FnMut(&[String])) {
    if k == xs.len() {
        f(xs);
        return;
    }
    for i in k..xs.len() {
        xs.swap(k, i);
        permute(xs, k + 1, f);
        xs.swap(k, i);
    }
}

pub fn triangle_order_independence(rng: &mut StdRng) -> Result<(), String> {
    let policy = algebra_policy();
    let env = random_wf_env(rng, &policy, 0.35);
    let xs = random_outputs(rng, &policy);
    let reference = env
        .tri_set(xs.iter().map(String::as_str))
        .map_err(|e| e.to_string())?;
    let orders = compatible_orders(&env, &xs);
    ensure(!orders.is_empty(), || {
        format!("no compatible order for {xs:?}")
    })?;
    for order in orders {
        let mut e = env.clone();
        for o in &order {
            e = e.tri_var(o).unwrap();
        }
        ensure(e == reference, || {
            format!("order {order:?} differs on\n{env}")
        })?;
    }
    Ok(())
}

pub fn triangle_well_formed(rng: &mut StdRng) -> Result<(), String> {
    let policy = algebra_policy();
    let env = random_wf_env(rng, &policy, 0.35);
    let x = OUTS.choose(rng).unwrap();
    let after = env.tri_var(x).unwrap();
    ensure(after.well_formed(), || {
        format!("⊲ {x} broke well-formedness of\n{env}")
    })?;
    let before = env.graph_edges();
    for (a, b) in after.graph_edges() {
        let two_step = before.contains(&(a.clone(), x.to_string()))
            && before.contains(&(x.to_string(), b.clone()));
        ensure(before.contains(&(a.clone(), b.clone())) || two_step, || {
            format!("new edge {a}->{b} after ⊲ {x}")
        })?;
        ensure(a != *x, || format!("edge leaves {x} after ⊲ {x}"))?;
    }
    let alpha = policy.alpha(x);
    ensure(after.iter().all(|(_, t)| !t.contains(&alpha)), || {
        format!("{alpha} survives ⊲ {x}")
    })?;
    let p = random_type(rng, 0.3);
    ensure(!env.tri_level(&p, x).unwrap().contains(&alpha), || {
        format!("{alpha} survives (p, Γ) ⊲ {x}")
    })?;
    let xs = random_outputs(rng, &policy);
    let set = env.tri_set(xs.iter().map(String::as_str)).unwrap();
    ensure(set.well_formed(), || {
        format!("⊲ {xs:?} broke well-formedness")
    })?;
    for o in &xs {
        let a = policy.alpha(o);
        ensure(set.iter().all(|(_, t)| !t.contains(&a)), || {
            format!("{a} survives ⊲ {xs:?}")
        })?;
    }
    Ok(())
}

pub fn triangle_monotone(rng: &mut StdRng) -> Result<(), String> {
    let policy = algebra_policy();
    let e2 = random_wf_env(rng, &policy, 0.35);
    let e1 = random_subenv(rng, &e2);
    let xs = random_outputs(rng, &policy);
    let set = || xs.iter().map(String::as_str);
    let (r1, r2) = (e1.tri_set(set()).unwrap(), e2.tri_set(set()).unwrap());
    ensure(r1.leq(&r2).unwrap(), || {
        format!("Γ1 ⊑ Γ2 but Γ1 ⊲ {xs:?} ⋢ Γ2 ⊲ {xs:?}")
    })?;
    let p2 = random_type(rng, 0.3);
    let p1 = random_restricted_subtype(rng, &p2);
    let (q1, q2) = (
        e1.tri_level_set(&p1, set()).unwrap(),
        e2.tri_level_set(&p2, set()).unwrap(),
    );
    ensure(q1.leq(&q2), || {
        format!("({p1}, Γ1) ⊲ {xs:?} = {q1} ⋢ {q2} = ({p2}, Γ2) ⊲ {xs:?}")
    })
}

pub fn triangle_absorbs(rng: &mut StdRng) -> Result<(), String> {
    let policy = algebra_policy();
    let e1 = random_wf_env(rng, &policy, 0.35);
    let xs = random_outputs(rng, &policy);
    let base = e1.tri_set(xs.iter().map(String::as_str)).unwrap();
    let mut e3 = base.clone();
    for (k, v) in base.iter() {
        let extra: SecType = random_type(rng, 0.2).real_atoms().cloned().collect();
        e3.set(k, v.join(&extra)).unwrap();
    }
    ensure(base.leq_r(&e3).unwrap(), || {
        "construction is not ⊑_r".into()
    })?;
    let again = e3.tri_set(xs.iter().map(String::as_str)).unwrap();
    ensure(again == e3, || format!("Γ3 ⊲ {xs:?} ≠ Γ3"))
}

pub fn while_typing_monotone(rng: &mut StdRng) -> Result<(), String> {
    let cfg = WhileGen {
        max_depth: 3,
        ..WhileGen::default()
    };
    let (policy, cmd) = gen_while(rng, &cfg);
    let e2 = random_wf_env(rng, &policy, 0.3);
    let e1 = random_subenv(rng, &e2);
    let pc2: SecType = policy
        .names()
        .filter(|_| rng.gen_bool(0.2))
        .map(Atom::real)
        .collect();
    let pc1 = random_restricted_subtype(rng, &pc2);
    for mode in [Mode::Base, Mode::ConstantTime] {
        let r1 =
            type_cmd(mode, &policy, &pc1, &e1, &cmd, false).map_err(|e| format!("{e} on {cmd}"))?;
        let r2 =
            type_cmd(mode, &policy, &pc2, &e2, &cmd, false).map_err(|e| format!("{e} on {cmd}"))?;
        ensure(r1.env.well_formed() && r2.env.well_formed(), || {
            format!("ill-formed result for {cmd}")
        })?;
        ensure(r1.env.leq(&r2.env).unwrap(), || {
            format!(
                "{mode:?} typing of {cmd} not monotone\nΓ1:\n{e1}\nΓ2:\n{e2}\nout1:\n{}\nout2:\n{}",
                r1.env, r2.env
            )
        })?;
    }
    Ok(())
}

pub fn ir_transfer_monotone(rng: &mut StdRng) -> Result<(), String> {
    let (prog, file) = gen_ir(rng, &IrGen::default());
    let policy = ir_policy(&prog, &file).map_err(|e| e.to_string())?;
    let ck = IrChecker::new(&prog, policy.clone()).map_err(|e| e.to_string())?;
    let b = rng.gen_range(0..prog.blocks.len());
    for instr in &prog.blocks[b].instrs {
        let e2 = random_wf_env(rng, &policy, 0.3);
        let e1 = random_subenv(rng, &e2);
        let r1 = ck.transfer(&e1, b, instr).map_err(|e| e.to_string())?;
        let r2 = ck.transfer(&e2, b, instr).map_err(|e| e.to_string())?;
        ensure(r1.leq(&r2).unwrap(), || {
            format!("transfer of `{}` not monotone", prog.render_instr(instr))
        })?;
    }
    Ok(())
}

// Control-flow oracle: questions answered by enumerating paths directly.

/// Every simple path starting at `from`, the one-node path included.
fn simple_paths(succ: &[Vec<BlockId>], from: BlockId) -> Vec<Vec<BlockId>> {
    fn go(succ: &[Vec<BlockId>], path: &mut Vec<BlockId>, out: &mut Vec<Vec<BlockId>>) {
        out.push(path.clone());
        let last = *path.last().unwrap();
        for &s in &succ[last] {
            if !path.contains(&s) {
                path.push(s);
                go(succ, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(succ, &mut vec![from], &mut out);
    out
}

/// Graph questions answered from simple paths. A node lies on some walk
/// from `a` to `b` exactly when a simple path leads from `a` to it and
/// another from it to `b`, so walk questions split into two path questions.
pub struct PathOracle<'a> {
    succ: &'a [Vec<BlockId>],
    n: usize,
    entry: BlockId,
    exit: BlockId,
    paths: Vec<Vec<Vec<BlockId>>>,
}

impl<'a> PathOracle<'a> {
    pub fn new(succ: &'a [Vec<BlockId>], entry: BlockId, exit: BlockId) -> Self {
        let paths = (0..succ.len()).map(|a| simple_paths(succ, a)).collect();
        PathOracle {
            succ,
            n: succ.len(),
            entry,
            exit,
            paths,
        }
    }

    fn paths_between(&self, a: BlockId, b: BlockId) -> impl Iterator<Item = &Vec<BlockId>> + '_ {
        self.paths[a]
            .iter()
            .filter(move |p| *p.last().unwrap() == b)
    }

    /// Reflexive reachability.
    fn reaches(&self, a: BlockId, b: BlockId) -> bool {
        self.paths_between(a, b).next().is_some()
    }

    /// Reachability along at least one edge.
    fn reaches_plus(&self, a: BlockId, b: BlockId) -> bool {
        (0..self.n).any(|x| self.succ[x].contains(&b) && self.reaches(a, x))
    }

    fn dominates(&self, a: BlockId, b: BlockId) -> bool {
        let mut paths = self.paths_between(self.entry, b).peekable();
        paths.peek().is_some() && paths.all(|p| p.contains(&a))
    }

    fn postdominates(&self, a: BlockId, b: BlockId) -> bool {
        if !self.reaches(self.entry, b) {
            return false;
        }
        let mut paths = self.paths_between(b, self.exit).peekable();
        paths.peek().is_some() && paths.all(|p| p.contains(&a))
    }

    pub fn dep(&self, b: BlockId) -> BTreeSet<BlockId> {
        if !self.reaches(self.entry, b) {
            return BTreeSet::new();
        }
        let on_cycle = self.reaches_plus(b, b);
        let mut out = BTreeSet::new();
        for bp in 0..self.n {
            if self.succ[bp].len() != 2 || !self.dominates(bp, b) || (bp == b && !on_cycle) {
                continue;
            }
            let between: Vec<BlockId> = (0..self.n)
                .filter(|&m| m != bp && self.reaches_plus(bp, m) && self.reaches(m, b))
                .collect();
            if !between.iter().any(|&m| self.postdominates(m, bp)) {
                out.insert(bp);
            }
        }
        out
    }

    /// Inner nodes of walks `bp -> m1 -> ... -> mk -> b`, `k >= 1`, whose
    /// inner nodes all fail to reach `c`.
    pub fn region(&self, bp: BlockId, b: BlockId, c: BlockId) -> BTreeSet<BlockId> {
        let avoid: Vec<bool> = (0..self.n).map(|m| !self.reaches(m, c)).collect();
        // Inner nodes reachable from bp through avoiding nodes only.
        let mut from_bp = BTreeSet::new();
        for p in &self.paths[bp] {
            if p.len() >= 2 && p[1..].iter().all(|&m| avoid[m]) {
                from_bp.insert(*p.last().unwrap());
            }
        }
        // Inner nodes with an avoiding route to a predecessor of b.
        let mut to_b = BTreeSet::new();
        for m in (0..self.n).filter(|&m| avoid[m]) {
            let ok = |p: &Vec<BlockId>| {
                p.iter().all(|&x| avoid[x]) && self.succ[*p.last().unwrap()].contains(&b)
            };
            if self.paths[m].iter().any(ok) {
                to_b.insert(m);
            }
        }
        // A walk may come back to bp, which no simple path from bp shows.
        if avoid[bp]
            && (self.succ[bp].contains(&bp) || from_bp.iter().any(|&x| self.succ[x].contains(&bp)))
        {
            from_bp.insert(bp);
        }
        from_bp.intersection(&to_b).copied().collect()
    }
}
/// Which region queries [`compare_graph`] makes for an edge `(c, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionStarts {
    /// Every block as `b'`.
    All,
    /// Only the immediate dominator of `b`, the query the type checker makes.
    Idom,
}

/// Compares `dep` and `hammock_region` with the path oracle on one graph.
pub fn compare_graph(succ: &[Vec<BlockId>]) -> Result<(), String> {
    compare_graph_with(succ, RegionStarts::All)
}

pub fn compare_graph_with(succ: &[Vec<BlockId>], starts: RegionStarts) -> Result<(), String> {
    let n = succ.len();
    let prog: IrProgram = skeleton(n, succ, 0, n - 1);
    let dom = compute_dominators(&prog);
    let oracle = PathOracle::new(succ, 0, n - 1);
    for b in 0..n {
        let got = dep(&prog, &dom, b, true);
        let want = oracle.dep(b);
        ensure(got == want, || {
            format!("dep({b}) = {got:?}, paths give {want:?} on {succ:?}")
        })?;
    }
    for c in 0..n {
        for &b in &succ[c] {
            let bps: Vec<BlockId> = match starts {
                RegionStarts::All => (0..n).collect(),
                RegionStarts::Idom => dom.idom[b].into_iter().collect(),
            };
            for bp in bps {
                let got = hammock_region(&prog, bp, b, c);
                let want = oracle.region(bp, b, c);
                ensure(got == want, || {
                    format!("Reg({bp}, {b}, ({c},{b})) = {got:?}, paths give {want:?} on {succ:?}")
                })?;
            }
        }
    }
    Ok(())
}

/// Every graph on `n` blocks where block `n-1` is the exit and every other
/// block has one successor or two distinct ones.
pub fn all_graphs(n: usize) -> Vec<Vec<Vec<BlockId>>> {
    let mut choices: Vec<Vec<BlockId>> = (0..n).map(|t| vec![t]).collect();
    for t in 0..n {
        for e in t + 1..n {
            choices.push(vec![t, e]);
        }
    }
    let mut out = vec![Vec::new()];
    for _ in 0..n - 1 {
        out = out
            .into_iter()
            .flat_map(|g: Vec<Vec<BlockId>>| {
                choices.iter().map(move |c| {
                    let mut g = g.clone();
                    g.push(c.clone());
                    g
                })
            })
            .collect();
    }
    for g in &mut out {
        g.push(Vec::new());
    }
    out
}

pub fn random_graph(rng: &mut StdRng, n: usize) -> Vec<Vec<BlockId>> {
    let mut g: Vec<Vec<BlockId>> = (0..n - 1)
        .map(|_| {
            let t = rng.gen_range(0..n);
            if rng.gen_bool(0.5) {
                let e = (t + rng.gen_range(1..n)) % n;
                vec![t, e]
            } else {
                vec![t]
            }
        })
        .collect();
    g.push(Vec::new());
    g
}

/// Successor lists of a generated program, exit last.
pub fn program_graph(p: &IrProgram) -> Option<Vec<Vec<BlockId>>> {
    (p.entry == 0 && p.exit == p.blocks.len() - 1)
        .then(|| (0..p.blocks.len()).map(|b| p.successors(b)).collect())
}

pub fn is_cond(p: &IrProgram, b: BlockId) -> bool {
    matches!(p.terminator(b), Some(Instr::Cond { .. }))
}

/// Every graph the IR generator can produce on `n` blocks: block `b` has a
/// forward successor `f > b` and optionally a second, arbitrary successor.
/// Branch order does not matter to either analysis, so pairs are unordered.
pub fn family_graphs(n: usize) -> Vec<Vec<Vec<BlockId>>> {
    let mut out: Vec<Vec<Vec<BlockId>>> = vec![Vec::new()];
    for b in 0..n.saturating_sub(1) {
        let mut choices: BTreeSet<Vec<BlockId>> = BTreeSet::new();
        for f in b + 1..n {
            choices.insert(vec![f]);
            for o in (0..n).filter(|&o| o != f) {
                choices.insert(vec![f.min(o), f.max(o)]);
            }
        }
        out = out
            .into_iter()
            .flat_map(|g| {
                choices.iter().map(move |c| {
                    let mut g = g.clone();
                    g.push(c.clone());
                    g
                })
            })
            .collect();
    }
    for g in &mut out {
        g.push(Vec::new());
    }
    out
}
