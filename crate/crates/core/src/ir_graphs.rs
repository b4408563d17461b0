//! Control-flow analyses used by the IR type system.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde_json::json;
use thiserror::Error;

use crate::ir::{BlockId, Instr, IrProgram, Operand};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error(
        "unresolved address: operand `{operand}` in block `{block}` points to no memory block"
    )]
    UnresolvedAddress { block: String, operand: String },
}

/// Blocks reachable from `from`, `from` included.
pub fn reachable_from(p: &IrProgram, from: BlockId) -> BTreeSet<BlockId> {
    let mut seen = BTreeSet::from([from]);
    let mut stack = vec![from];
    while let Some(b) = stack.pop() {
        for s in p.successors(b) {
            if seen.insert(s) {
                stack.push(s);
            }
        }
    }
    seen
}

/// Blocks from which `to` is reachable, `to` included.
fn reaching(pred: &[Vec<BlockId>], to: BlockId) -> BTreeSet<BlockId> {
    let mut seen = BTreeSet::from([to]);
    let mut stack = vec![to];
    while let Some(b) = stack.pop() {
        for &q in &pred[b] {
            if seen.insert(q) {
                stack.push(q);
            }
        }
    }
    seen
}

pub fn predecessors(p: &IrProgram) -> Vec<Vec<BlockId>> {
    let mut pred = vec![Vec::new(); p.blocks.len()];
    for b in 0..p.blocks.len() {
        for s in p.successors(b) {
            pred[s].push(b);
        }
    }
    pred
}

/// Dominator and post-dominator sets computed by the iterative dataflow
/// algorithm over the blocks reachable from the entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomInfo {
    live: BTreeSet<BlockId>,
    dom: Vec<BTreeSet<BlockId>>,
    pdom: Vec<BTreeSet<BlockId>>,
    pub idom: Vec<Option<BlockId>>,
    pub ipdom: Vec<Option<BlockId>>,
}

impl DomInfo {
    /// Reflexive dominance; false for blocks unreachable from the entry.
    pub fn dominates(&self, a: BlockId, b: BlockId) -> bool {
        self.live.contains(&b) && self.dom[b].contains(&a)
    }

    pub fn postdominates(&self, a: BlockId, b: BlockId) -> bool {
        self.live.contains(&b) && self.pdom[b].contains(&a)
    }

    pub fn is_live(&self, b: BlockId) -> bool {
        self.live.contains(&b)
    }

    pub fn live(&self) -> &BTreeSet<BlockId> {
        &self.live
    }
}

fn iterate_dom(
    nodes: &BTreeSet<BlockId>,
    root: BlockId,
    preds: impl Fn(BlockId) -> Vec<BlockId>,
) -> BTreeMap<BlockId, BTreeSet<BlockId>> {
    let mut sets: BTreeMap<BlockId, BTreeSet<BlockId>> = nodes
        .iter()
        .map(|&n| {
            (
                n,
                if n == root {
                    BTreeSet::from([root])
                } else {
                    nodes.clone()
                },
            )
        })
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for &n in nodes {
            if n == root {
                continue;
            }
            let mut acc: Option<BTreeSet<BlockId>> = None;
            for q in preds(n).into_iter().filter(|q| nodes.contains(q)) {
                acc = Some(match acc {
                    None => sets[&q].clone(),
                    Some(a) => a.intersection(&sets[&q]).copied().collect(),
                });
            }
            let mut new = acc.unwrap_or_default();
            new.insert(n);
            if new != sets[&n] {
                sets.insert(n, new);
                changed = true;
            }
        }
    }
    sets
}

/// Closest strict dominator: the one dominated by every other.
fn immediate(sets: &BTreeMap<BlockId, BTreeSet<BlockId>>, n: BlockId) -> Option<BlockId> {
    let strict: Vec<BlockId> = sets[&n].iter().copied().filter(|&d| d != n).collect();
    strict
        .iter()
        .copied()
        .find(|&d| strict.iter().all(|&e| sets[&d].contains(&e)))
}

pub fn compute_dominators(p: &IrProgram) -> DomInfo {
    let n = p.blocks.len();
    let live = reachable_from(p, p.entry);
    let pred = predecessors(p);
    let dom_sets = iterate_dom(&live, p.entry, |b| pred[b].clone());
    let co_live: BTreeSet<BlockId> = live
        .iter()
        .copied()
        .filter(|&b| reachable_from(p, b).contains(&p.exit))
        .collect();
    let pdom_sets = if co_live.contains(&p.exit) {
        iterate_dom(&co_live, p.exit, |b| p.successors(b))
    } else {
        BTreeMap::new()
    };
    let mut dom = vec![BTreeSet::new(); n];
    let mut pdom = vec![BTreeSet::new(); n];
    let mut idom = vec![None; n];
    let mut ipdom = vec![None; n];
    for (&b, s) in &dom_sets {
        dom[b] = s.clone();
        idom[b] = immediate(&dom_sets, b);
    }
    for (&b, s) in &pdom_sets {
        pdom[b] = s.clone();
        ipdom[b] = immediate(&pdom_sets, b);
    }
    DomInfo {
        live,
        dom,
        pdom,
        idom,
        ipdom,
    }
}

/// Nodes `n ≠ from` lying on some walk `from → … → to` of at least one edge.
/// With `inclusive`, `to` itself is a candidate; otherwise it is left out.
fn between(
    p: &IrProgram,
    from: BlockId,
    to_reachers: &BTreeSet<BlockId>,
    to: BlockId,
    inclusive: bool,
) -> BTreeSet<BlockId> {
    let mut fwd = BTreeSet::new();
    let mut stack: Vec<BlockId> = p.successors(from);
    while let Some(b) = stack.pop() {
        if fwd.insert(b) {
            stack.extend(p.successors(b));
        }
    }
    fwd.into_iter()
        .filter(|&m| m != from && (inclusive || m != to) && to_reachers.contains(&m))
        .collect()
}

/// Blocks whose branch decides whether `b` runs: `b'` dominating `b`, ending
/// in `cond`, with no block between `b'` and `b` post-dominating `b'`. A
/// block only depends on itself when it lies on a cycle.
pub fn dep(p: &IrProgram, dom: &DomInfo, b: BlockId, inclusive: bool) -> BTreeSet<BlockId> {
    if !dom.is_live(b) {
        return BTreeSet::new();
    }
    let reachers = reaching(&predecessors(p), b);
    let on_cycle = p.successors(b).into_iter().any(|s| reachers.contains(&s));
    dom.live()
        .iter()
        .copied()
        .filter(|&bp| dom.dominates(bp, b) && matches!(p.terminator(bp), Some(Instr::Cond { .. })))
        .filter(|&bp| bp != b || on_cycle)
        .filter(|&bp| {
            !between(p, bp, &reachers, b, inclusive)
                .into_iter()
                .any(|m| dom.postdominates(m, bp))
        })
        .collect()
}

/// The branching register of a block ending in `cond`.
pub fn br(p: &IrProgram, b: BlockId) -> Option<&str> {
    match p.terminator(b) {
        Some(Instr::Cond { reg, .. }) => Some(reg),
        _ => None,
    }
}

/// Blocks on walks `b' → b1 → … → bn → b` whose intermediate blocks all
/// fail to reach `c` (reflexively). These are the blocks of the alternative
/// paths into `b` that bypass the edge `(c, b)`.
pub fn hammock_region(
    p: &IrProgram,
    b_prime: BlockId,
    b: BlockId,
    c: BlockId,
) -> BTreeSet<BlockId> {
    let pred = predecessors(p);
    let reach_c = reaching(&pred, c);
    let allowed: Vec<bool> = (0..p.blocks.len()).map(|m| !reach_c.contains(&m)).collect();
    let mut fwd = BTreeSet::new();
    let mut stack: Vec<BlockId> = p
        .successors(b_prime)
        .into_iter()
        .filter(|&m| allowed[m])
        .collect();
    while let Some(m) = stack.pop() {
        if fwd.insert(m) {
            stack.extend(p.successors(m).into_iter().filter(|&s| allowed[s]));
        }
    }
    let mut bwd = BTreeSet::new();
    let mut stack: Vec<BlockId> = pred[b].iter().copied().filter(|&m| allowed[m]).collect();
    while let Some(m) = stack.pop() {
        if bwd.insert(m) {
            stack.extend(pred[m].iter().copied().filter(|&q| allowed[q]));
        }
    }
    fwd.intersection(&bwd).copied().collect()
}

/// Flow-insensitive, field-insensitive points-to facts. Keys are registers
/// and memory block names (for the contents of a block).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PtsMap {
    pub facts: BTreeMap<String, BTreeSet<String>>,
}

impl PtsMap {
    pub fn of_operand(&self, o: &Operand) -> BTreeSet<String> {
        match o {
            Operand::Imm(_) => BTreeSet::new(),
            Operand::Block(b) => BTreeSet::from([b.clone()]),
            Operand::Reg(r) => self.facts.get(r).cloned().unwrap_or_default(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.facts
                .iter()
                .filter(|(_, v)| !v.is_empty())
                .map(|(k, v)| (k.clone(), json!(v)))
                .collect(),
        )
    }
}

fn pts_step(p: &IrProgram, pts: &mut PtsMap) -> bool {
    let mut changed = false;
    let mut add =
        |facts: &mut BTreeMap<String, BTreeSet<String>>, key: &str, new: BTreeSet<String>| {
            if p.ptsto.contains_key(key) {
                return;
            }
            let slot = facts.entry(key.to_string()).or_default();
            for m in new {
                changed |= slot.insert(m);
            }
        };
    for b in &p.blocks {
        for i in &b.instrs {
            match i {
                Instr::Op {
                    dest,
                    op: crate::ir::OpName::Gep,
                    args,
                } => {
                    let s = pts.of_operand(&args[0]);
                    add(&mut pts.facts, dest, s);
                }
                Instr::Load { dest, addr } => {
                    let mut s = BTreeSet::new();
                    for m in pts.of_operand(addr) {
                        s.extend(pts.facts.get(&m).cloned().unwrap_or_default());
                    }
                    add(&mut pts.facts, dest, s);
                }
                Instr::Store { val, addr } => {
                    let s = pts.of_operand(val);
                    if !s.is_empty() {
                        for m in pts.of_operand(addr) {
                            add(&mut pts.facts, &m, s.clone());
                        }
                    }
                }
                _ => {}
            }
        }
    }
    changed
}

/// Runs the analysis to closure and checks that every memory operand
/// resolves to at least one block.
pub fn points_to(p: &IrProgram) -> Result<PtsMap, GraphError> {
    let mut pts = PtsMap::default();
    for d in &p.decls {
        pts.facts
            .insert(d.reg.clone(), BTreeSet::from([d.block.clone()]));
    }
    for (r, set) in &p.ptsto {
        pts.facts.insert(r.clone(), set.clone());
    }
    while pts_step(p, &mut pts) {}
    for b in &p.blocks {
        for i in &b.instrs {
            let addr = match i {
                Instr::Load { addr, .. } | Instr::Store { addr, .. } => addr,
                _ => continue,
            };
            if pts.of_operand(addr).is_empty() {
                return Err(GraphError::UnresolvedAddress {
                    block: b.name.clone(),
                    operand: addr.to_string(),
                });
            }
        }
    }
    Ok(pts)
}

/// Every analysis result the type system needs, computed once.
#[derive(Clone, Debug)]
pub struct Graphs {
    pub dom: DomInfo,
    pub deps: Vec<BTreeSet<BlockId>>,
    pub pts: PtsMap,
    pub preds: Vec<Vec<BlockId>>,
}

impl Graphs {
    pub fn new(p: &IrProgram) -> Result<Self, GraphError> {
        Graphs::with_dep_mode(p, true)
    }

    pub fn with_dep_mode(p: &IrProgram, inclusive: bool) -> Result<Self, GraphError> {
        let dom = compute_dominators(p);
        let deps = (0..p.blocks.len())
            .map(|b| dep(p, &dom, b, inclusive))
            .collect();
        Ok(Graphs {
            deps,
            pts: points_to(p)?,
            preds: predecessors(p),
            dom,
        })
    }

    /// Debug view: dominator tree, dep sets and points-to facts.
    pub fn to_json(&self, p: &IrProgram) -> serde_json::Value {
        let name = |b: BlockId| p.block_name(b).to_string();
        let opt = |b: Option<BlockId>| b.map(name);
        let live: Vec<BlockId> = self.dom.live().iter().copied().collect();
        json!({
            "idom": live.iter().map(|&b| (name(b), json!(opt(self.dom.idom[b])))).collect::<serde_json::Map<_, _>>(),
            "ipdom": live.iter().map(|&b| (name(b), json!(opt(self.dom.ipdom[b])))).collect::<serde_json::Map<_, _>>(),
            "dep": live
                .iter()
                .map(|&b| (name(b), json!(self.deps[b].iter().map(|&d| name(d)).collect::<Vec<_>>())))
                .collect::<serde_json::Map<_, _>>(),
            "ptsto": self.pts.to_json(),
        })
    }
}

/// Build a program from a bare edge list, for analyses that only look at
/// the graph. Blocks with two successors end in `cond %cN`, others in
/// `goto`; the exit block has no successors.
pub fn skeleton(n: usize, succ: &[Vec<BlockId>], entry: BlockId, exit: BlockId) -> IrProgram {
    use crate::ir::Block;
    let mut registers = BTreeSet::new();
    let blocks = (0..n)
        .map(|b| {
            let instrs = match succ[b].as_slice() {
                [] => vec![],
                [t] => vec![Instr::Goto(*t)],
                [t, e, ..] => {
                    let reg = format!("%c{b}");
                    registers.insert(reg.clone());
                    vec![
                        Instr::Op {
                            dest: reg.clone(),
                            op: crate::ir::OpName::Eq,
                            args: vec![Operand::Imm(0.into()), Operand::Imm(0.into())],
                        },
                        Instr::Cond {
                            reg,
                            then_b: *t,
                            else_b: *e,
                        },
                    ]
                }
            };
            Block {
                name: format!("n{b}"),
                instrs,
            }
        })
        .collect();
    IrProgram {
        blocks,
        entry,
        exit,
        decls: vec![],
        memory: BTreeMap::new(),
        ptsto: BTreeMap::new(),
        registers,
    }
}

/// Breadth-first order of the live blocks, for deterministic iteration.
pub fn bfs_order(p: &IrProgram) -> Vec<BlockId> {
    let mut seen = BTreeSet::from([p.entry]);
    let mut order = vec![p.entry];
    let mut q = VecDeque::from([p.entry]);
    while let Some(b) = q.pop_front() {
        for s in p.successors(b) {
            if seen.insert(s) {
                order.push(s);
                q.push_back(s);
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    // A=0, B=1, C=2, D=3
    fn diamond() -> IrProgram {
        skeleton(4, &[vec![1, 2], vec![3], vec![3], vec![]], 0, 3)
    }

    #[test]
    fn chain_dominators() {
        let p = skeleton(3, &[vec![1], vec![2], vec![]], 0, 2);
        let d = compute_dominators(&p);
        assert_eq!(d.idom[2], Some(1));
        assert_eq!(d.ipdom[0], Some(1));
        assert!((0..3).all(|b| dep(&p, &d, b, true).is_empty()));
    }

    #[test]
    fn diamond_dominators_and_dep() {
        let p = diamond();
        let d = compute_dominators(&p);
        assert_eq!(d.idom[3], Some(0));
        assert_eq!(d.ipdom[0], Some(3));
        assert_eq!(dep(&p, &d, 1, true), BTreeSet::from([0]));
        assert_eq!(dep(&p, &d, 3, true), BTreeSet::new());
        assert_eq!(dep(&p, &d, 3, false), BTreeSet::from([0]));
        assert_eq!(dep(&p, &d, 0, true), BTreeSet::new());
        assert_eq!(br(&p, 0), Some("%c0"));
        assert_eq!(br(&p, 1), None);
    }

    #[test]
    fn loop_dominators() {
        // A=0 -> {B=1, E=2}, B -> A
        let p = skeleton(3, &[vec![1, 2], vec![0], vec![]], 0, 2);
        let d = compute_dominators(&p);
        assert_eq!(d.idom[1], Some(0));
        assert_eq!(d.ipdom[1], Some(0));
        assert_eq!(dep(&p, &d, 1, true), BTreeSet::from([0]));
        assert_eq!(dep(&p, &d, 0, true), BTreeSet::from([0]));
        assert_eq!(dep(&p, &d, 2, true), BTreeSet::new());
    }

    #[test]
    fn nested_diamonds_depend_on_both_conditions() {
        // 0 -> {1, 5}; 1 -> {2, 3}; 2,3 -> 4; 4 -> 6; 5 -> 6
        let p = skeleton(
            7,
            &[
                vec![1, 5],
                vec![2, 3],
                vec![4],
                vec![4],
                vec![6],
                vec![6],
                vec![],
            ],
            0,
            6,
        );
        let d = compute_dominators(&p);
        assert_eq!(dep(&p, &d, 2, true), BTreeSet::from([0, 1]));
        assert_eq!(dep(&p, &d, 4, true), BTreeSet::from([0]));
    }

    #[test]
    fn hammock_of_diamond() {
        let p = diamond();
        assert_eq!(hammock_region(&p, 0, 3, 2), BTreeSet::from([1]));
        assert_eq!(hammock_region(&p, 0, 3, 1), BTreeSet::from([2]));
        let chain = skeleton(2, &[vec![1], vec![]], 0, 1);
        assert!(hammock_region(&chain, 0, 1, 0).is_empty());
    }

    #[test]
    fn points_to_follows_geps_and_memory() {
        let src = "\
global @p -> b0 2
global @q -> b1 2
entry a
exit end
block a:
  %g = op gep @p 1
  store @q %g
  %h = load %g
  %v = load %h
  %w = op add %v 1
  goto end
block end:
";
        let p = crate::ir::parse_ir(src).unwrap();
        let pts = points_to(&p).unwrap();
        assert_eq!(pts.facts["%g"], BTreeSet::from(["b0".to_string()]));
        assert_eq!(pts.facts["b0"], BTreeSet::from(["b1".to_string()]));
        assert_eq!(pts.facts["%h"], BTreeSet::from(["b1".to_string()]));
        assert!(!pts.facts.contains_key("%w"));
        let mut again = pts.clone();
        assert!(!pts_step(&p, &mut again));
    }

    #[test]
    fn unresolved_addresses_are_errors() {
        let src = "entry a\nexit end\nblock a:\n %v = load 3\n goto end\nblock end:\n";
        let p = crate::ir::parse_ir(src).unwrap();
        assert!(matches!(
            points_to(&p),
            Err(GraphError::UnresolvedAddress { .. })
        ));
    }
}
