//! Random program generators and the soundness harness.
//!
//! Every program the checker accepts must pass the exhaustive oracle; a
//! program that the oracle clears but the checker rejects only counts
//! toward the imprecision statistics.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value as Json;

use crate::ir::{parse_ir, IrProgram};
use crate::ir_typing::{ir_verdict_with, IrChecker, IrTypeError, IrVerdict, Mutation};
use crate::oracle::{check_osct, check_osct_ir, check_osni, EnumSpec, OracleVerdict};
use crate::secenv::{Policy, PolicyFile};
use crate::while_lang::{BinOp, Cmd, Expr};
use crate::while_typing::{check_program, Mode, TypeError};

/// Shape of generated While programs.
#[derive(Clone, Debug)]
pub struct WhileGen {
    pub max_depth: usize,
    pub max_scalars: usize,
    /// Generate at most one array of length 2.
    pub array: bool,
    /// Allow `if` and `while`.
    pub branching: bool,
}

impl Default for WhileGen {
    fn default() -> Self {
        WhileGen {
            max_depth: 4,
            max_scalars: 4,
            array: true,
            branching: true,
        }
    }
}

const SCALARS: [&str; 4] = ["u", "v", "w", "z"];
const ARRAY: &str = "t";

struct WhileCtx<'a> {
    cfg: &'a WhileGen,
    scalars: Vec<&'static str>,
    array: Option<&'static str>,
}

impl WhileCtx<'_> {
    fn plain(&self, rng: &mut StdRng, depth: usize) -> Expr {
        if depth == 0 || rng.gen_bool(0.4) {
            return if rng.gen_bool(0.3) {
                Expr::int(rng.gen_range(0..3))
            } else {
                Expr::var(self.scalars.choose(rng).expect("at least one scalar"))
            };
        }
        if rng.gen_bool(0.15) {
            return Expr::negate(self.plain(rng, depth - 1));
        }
        let (l, r) = (self.plain(rng, depth - 1), self.plain(rng, depth - 1));
        bin(rng, l, r)
    }

    /// An index expression that stays within `0..2` for nonnegative and
    /// negative values alike.
    fn index(&self, rng: &mut StdRng) -> Expr {
        if rng.gen_bool(0.3) {
            Expr::int(rng.gen_range(0..2))
        } else {
            Expr::bin(BinOp::And, self.plain(rng, 1), Expr::int(1))
        }
    }

    fn expr(&self, rng: &mut StdRng, depth: usize) -> Expr {
        match self.array {
            Some(a) if depth > 0 && rng.gen_bool(0.25) => Expr::index(a, self.index(rng)),
            _ if depth == 0 => self.plain(rng, 0),
            _ if rng.gen_bool(0.5) => self.plain(rng, depth),
            _ => {
                let (l, r) = (self.expr(rng, depth - 1), self.expr(rng, depth - 1));
                bin(rng, l, r)
            }
        }
    }

    fn atomic(&self, rng: &mut StdRng) -> Cmd {
        match (self.array, rng.gen_range(0..10)) {
            (_, 0) => Cmd::Skip,
            (Some(a), 1..=3) => Cmd::store(a, self.index(rng), self.expr(rng, 1)),
            _ => Cmd::assign(self.scalars.choose(rng).expect("scalar"), self.expr(rng, 2)),
        }
    }

    fn cmd(&self, rng: &mut StdRng, depth: usize) -> Cmd {
        if depth == 0 {
            return self.atomic(rng);
        }
        let choice = rng.gen_range(0..10);
        match choice {
            0..=3 => self.atomic(rng),
            4..=6 => Cmd::seq(self.cmd(rng, depth - 1), self.cmd(rng, depth - 1)),
            7 | 8 if self.cfg.branching => Cmd::if_(
                self.expr(rng, 2),
                self.cmd(rng, depth - 1),
                self.cmd(rng, depth - 1),
            ),
            9 if self.cfg.branching => {
                // Counting loops terminate unless the body resets the counter.
                let k = self.scalars.choose(rng).expect("scalar");
                let bound = if rng.gen_bool(0.5) {
                    Expr::int(2)
                } else {
                    self.plain(rng, 0)
                };
                let body = Cmd::seq(
                    self.cmd(rng, depth - 1),
                    Cmd::assign(k, Expr::bin(BinOp::Add, Expr::var(k), Expr::int(1))),
                );
                Cmd::while_(Expr::bin(BinOp::Lt, Expr::var(k), bound), body)
            }
            _ => Cmd::seq(self.atomic(rng), self.cmd(rng, depth - 1)),
        }
    }
}

/// A binary expression; products always have a constant right operand so
/// that loops cannot square values into huge integers.
fn bin(rng: &mut StdRng, l: Expr, r: Expr) -> Expr {
    let op = *[
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::And,
        BinOp::Or,
    ]
    .choose(rng)
    .expect("non-empty");
    let r = if op == BinOp::Mul {
        Expr::int(rng.gen_range(0..3))
    } else {
        r
    };
    Expr::bin(op, l, r)
}

fn subset<T: Clone>(rng: &mut StdRng, items: &[T], p: f64) -> Vec<T> {
    items.iter().filter(|_| rng.gen_bool(p)).cloned().collect()
}

/// A random While program with a random policy over its variables.
pub fn gen_while(rng: &mut StdRng, cfg: &WhileGen) -> (Arc<Policy>, Cmd) {
    let n = rng.gen_range(1..=cfg.max_scalars.clamp(1, SCALARS.len()));
    let scalars: Vec<&'static str> = SCALARS[..n].to_vec();
    let array = (cfg.array && rng.gen_bool(0.5)).then_some(ARRAY);
    let ctx = WhileCtx {
        cfg,
        scalars: scalars.clone(),
        array,
    };
    let depth = rng.gen_range(1..=cfg.max_depth.max(1));
    let cmd = ctx.cmd(rng, depth);
    let mut names: Vec<&str> = scalars.clone();
    names.extend(array);
    let inputs = subset(rng, &names, 0.4);
    let outputs = subset(rng, &scalars, 0.3);
    let leaks = subset(rng, &names, 0.4);
    let policy = Policy::new(scalars, array.map(|a| (a, 2)), inputs, outputs, leaks)
        .expect("generated policy is valid");
    (Arc::new(policy), cmd)
}

/// Shape of generated IR programs.
#[derive(Clone, Debug)]
pub struct IrGen {
    pub max_blocks: usize,
    pub max_memory: usize,
}

impl Default for IrGen {
    fn default() -> Self {
        IrGen {
            max_blocks: 6,
            max_memory: 2,
        }
    }
}

struct IrText {
    ints: Vec<String>,
    addrs: Vec<String>,
    fresh: usize,
    out: String,
}

impl IrText {
    fn fresh(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("%{prefix}{}", self.fresh)
    }

    /// A destination register: usually fresh, sometimes an existing one so
    /// that outputs get reassigned.
    fn dest(&mut self, rng: &mut StdRng) -> String {
        if !self.ints.is_empty() && rng.gen_bool(0.3) {
            return self.ints.choose(rng).expect("non-empty").clone();
        }
        let d = self.fresh("v");
        self.ints.push(d.clone());
        d
    }

    fn int_operand(&self, rng: &mut StdRng) -> String {
        if self.ints.is_empty() || rng.gen_bool(0.3) {
            rng.gen_range(0..3).to_string()
        } else {
            self.ints.choose(rng).expect("non-empty").clone()
        }
    }

    fn instr(&mut self, rng: &mut StdRng) {
        match rng.gen_range(0..10) {
            0..=2 => {
                let addr = self.addrs.choose(rng).expect("memory exists").clone();
                let d = self.dest(rng);
                writeln!(self.out, "  {d} = load {addr}").expect("string write");
            }
            3 | 4 => {
                let addr = self.addrs.choose(rng).expect("memory exists").clone();
                let v = self.int_operand(rng);
                writeln!(self.out, "  store {v} {addr}").expect("string write");
            }
            5 => {
                let base = self.addrs[..self.addrs.len().min(2)]
                    .choose(rng)
                    .expect("memory exists")
                    .clone();
                let x = self.int_operand(rng);
                let i = self.fresh("i");
                let g = self.fresh("g");
                writeln!(self.out, "  {i} = op and {x} 1\n  {g} = op gep {base} {i}")
                    .expect("string write");
                self.ints.push(i);
                self.addrs.push(g);
            }
            6 => {
                let x = self.int_operand(rng);
                let d = self.dest(rng);
                writeln!(self.out, "  {d} = op not {x}").expect("string write");
            }
            _ => {
                let op = ["add", "sub", "mul", "eq", "lt", "and"]
                    .choose(rng)
                    .expect("non-empty");
                let x = self.int_operand(rng);
                // A constant factor keeps repeated multiplication in loops
                // from squaring values into huge integers.
                let y = if *op == "mul" {
                    rng.gen_range(0..3).to_string()
                } else {
                    self.int_operand(rng)
                };
                let d = self.dest(rng);
                writeln!(self.out, "  {d} = op {op} {x} {y}").expect("string write");
            }
        }
    }
}

/// A random IR program and policy. Backward branches are guarded by a
/// per-block visit counter so that most runs terminate.
pub fn gen_ir(rng: &mut StdRng, cfg: &IrGen) -> (IrProgram, PolicyFile) {
    let n = rng.gen_range(2..=cfg.max_blocks.max(2));
    let nmem = rng.gen_range(1..=cfg.max_memory.max(1));
    let mut t = IrText {
        ints: Vec::new(),
        addrs: Vec::new(),
        fresh: 0,
        out: String::new(),
    };
    let mut mems = Vec::new();
    for m in 0..nmem {
        writeln!(t.out, "global @p{m} -> m{m} 2").expect("string write");
        mems.push(format!("m{m}"));
    }
    t.addrs = (0..nmem).map(|m| format!("@p{m}")).collect();
    t.addrs.extend(mems.iter().cloned());
    writeln!(t.out, "entry b0\nexit b{}", n - 1).expect("string write");
    for b in 0..n {
        writeln!(t.out, "block b{b}:").expect("string write");
        for _ in 0..rng.gen_range(0..=3) {
            t.instr(rng);
        }
        if b == n - 1 {
            break;
        }
        let fwd = rng.gen_range(b + 1..n);
        if rng.gen_bool(0.3) {
            writeln!(t.out, "  goto b{fwd}").expect("string write");
            continue;
        }
        let other = rng.gen_range(0..n);
        let c = format!("%c{b}");
        if other <= b {
            let k = format!("%k{b}");
            let lim = t.int_operand(rng);
            writeln!(t.out, "  {k} = op add {k} 1\n  {c} = op lt {k} {lim}").expect("string write");
            writeln!(t.out, "  cond {c} b{other} b{fwd}").expect("string write");
        } else {
            let (x, y) = (t.int_operand(rng), t.int_operand(rng));
            writeln!(t.out, "  {c} = op eq {x} {y}").expect("string write");
            let (a, e) = if rng.gen_bool(0.5) {
                (other, fwd)
            } else {
                (fwd, other)
            };
            writeln!(t.out, "  cond {c} b{a} b{e}").expect("string write");
        }
    }
    let prog =
        parse_ir(&t.out).unwrap_or_else(|e| panic!("generated IR does not parse: {e}\n{}", t.out));
    let mut outs: Vec<String> = subset(rng, &t.ints, 0.35);
    outs.truncate(3);
    if rng.gen_bool(0.2) {
        outs.extend(mems.choose(rng).cloned());
    }
    let inputs = subset(rng, &mems, 0.4);
    let policy = PolicyFile {
        inputs,
        outputs: outs,
        ..PolicyFile::default()
    };
    (prog, policy)
}

/// Settings for one soundness campaign.
#[derive(Clone, Debug)]
pub struct FuzzConfig {
    pub seed: u64,
    pub count: usize,
    pub domain: u32,
    pub cap: u64,
    pub mode: Mode,
    pub while_gen: WhileGen,
    pub ir_gen: IrGen,
    pub mutation: Option<Mutation>,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            seed: 0,
            count: 100,
            domain: 2,
            cap: 10_000,
            mode: Mode::ConstantTime,
            while_gen: WhileGen::default(),
            ir_gen: IrGen::default(),
            mutation: None,
        }
    }
}

/// An accepted program that the oracle refutes.
#[derive(Clone, Debug, Serialize)]
pub struct SoundnessFailure {
    pub index: usize,
    pub program: String,
    pub policy: PolicyFile,
    pub counterexample: Json,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FuzzStats {
    pub programs: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub not_well_typed: usize,
    pub oracle_holds: usize,
    /// Oracle holds but the checker rejects.
    pub imprecise: usize,
    /// Programs left out because the oracle budget was exceeded.
    pub skipped: usize,
    /// Enumerated runs excluded for timeouts or runtime errors.
    pub excluded_runs: u64,
    /// Fixpoints that hit their iteration bound.
    pub bound_hits: usize,
    pub max_loop_iterations: usize,
    pub max_kildall_visits: usize,
    pub failures: Vec<SoundnessFailure>,
}

impl FuzzStats {
    /// Share of oracle-clean programs that the checker accepts.
    pub fn precision(&self) -> f64 {
        if self.oracle_holds == 0 {
            1.0
        } else {
            (self.oracle_holds - self.imprecise) as f64 / self.oracle_holds as f64
        }
    }

    fn absorb(&mut self, o: Outcome) {
        self.programs += 1;
        match o.verdict {
            Some(Checked::Accept) => self.accepted += 1,
            Some(Checked::Reject) => self.rejected += 1,
            Some(Checked::NotWellTyped) => self.not_well_typed += 1,
            None => {}
        }
        match o.oracle {
            Some(true) => {
                self.oracle_holds += 1;
                if !matches!(o.verdict, Some(Checked::Accept)) {
                    self.imprecise += 1;
                }
            }
            Some(false) => {}
            None => self.skipped += 1,
        }
        self.excluded_runs += o.excluded;
        self.bound_hits += usize::from(o.bound_hit);
        self.max_loop_iterations = self.max_loop_iterations.max(o.loop_iterations);
        self.max_kildall_visits = self.max_kildall_visits.max(o.kildall_visits);
        self.failures.extend(o.failure);
    }
}

enum Checked {
    Accept,
    Reject,
    NotWellTyped,
}

#[derive(Default)]
struct Outcome {
    verdict: Option<Checked>,
    oracle: Option<bool>,
    excluded: u64,
    bound_hit: bool,
    loop_iterations: usize,
    kildall_visits: usize,
    failure: Option<SoundnessFailure>,
}

/// Deterministic per-program generator.
pub fn program_rng(seed: u64, index: usize) -> StdRng {
    StdRng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(index as u64),
    )
}

fn while_oracle(mode: Mode, c: &Cmd, p: &Policy, spec: &EnumSpec) -> Option<(OracleVerdict, u64)> {
    let r = match mode {
        Mode::Base => check_osni(c, p, spec),
        Mode::ConstantTime => check_osct(c, p, spec),
    }
    .ok()?;
    Some((r.verdict, r.timeouts + r.errors))
}

fn accepted_and_refuted(mode: Mode, c: &Cmd, p: &Arc<Policy>, spec: &EnumSpec) -> bool {
    let Ok(rep) = check_program(mode, p.clone(), c) else {
        return false;
    };
    rep.verdict.is_accept()
        && matches!(
            while_oracle(mode, c, p, spec),
            Some((OracleVerdict::Counterexample(_), _))
        )
}

/// One-step reductions of `c`: a subterm replaced by `skip` or by one of
/// its children.
fn shrink_candidates(c: &Cmd) -> Vec<Cmd> {
    let mut out = Vec::new();
    match c {
        Cmd::Skip => return out,
        Cmd::Seq(a, b) => {
            out.push((**a).clone());
            out.push((**b).clone());
            out.extend(
                shrink_candidates(a)
                    .into_iter()
                    .map(|x| Cmd::seq(x, (**b).clone())),
            );
            out.extend(
                shrink_candidates(b)
                    .into_iter()
                    .map(|x| Cmd::seq((**a).clone(), x)),
            );
        }
        Cmd::If(e, a, b) => {
            out.push((**a).clone());
            out.push((**b).clone());
            out.extend(
                shrink_candidates(a)
                    .into_iter()
                    .map(|x| Cmd::if_(e.clone(), x, (**b).clone())),
            );
            out.extend(
                shrink_candidates(b)
                    .into_iter()
                    .map(|x| Cmd::if_(e.clone(), (**a).clone(), x)),
            );
        }
        Cmd::While(e, body) => {
            out.push((**body).clone());
            out.extend(
                shrink_candidates(body)
                    .into_iter()
                    .map(|x| Cmd::while_(e.clone(), x)),
            );
        }
        _ => {}
    }
    out.insert(0, Cmd::Skip);
    out
}

/// Greedily shrinks a failing program while it stays accepted and refuted.
pub fn shrink_while(mode: Mode, mut c: Cmd, p: &Arc<Policy>, spec: &EnumSpec) -> Cmd {
    'outer: loop {
        for cand in shrink_candidates(&c) {
            if accepted_and_refuted(mode, &cand, p, spec) {
                c = cand;
                continue 'outer;
            }
        }
        return c;
    }
}

fn cex_json(v: &OracleVerdict) -> Json {
    match v {
        OracleVerdict::Holds => Json::Null,
        OracleVerdict::Counterexample(c) => serde_json::json!({
            "first": c.first,
            "second": c.second,
            "difference": c.difference,
            "first_observation": c.first_observation,
            "second_observation": c.second_observation,
        }),
    }
}

fn fuzz_while_one(cfg: &FuzzConfig, index: usize) -> Outcome {
    let mut rng = program_rng(cfg.seed, index);
    let (policy, cmd) = gen_while(&mut rng, &cfg.while_gen);
    let spec = EnumSpec::new(cfg.domain, cfg.cap);
    let mut o = Outcome::default();
    match check_program(cfg.mode, policy.clone(), &cmd) {
        Ok(rep) => {
            o.loop_iterations = rep.loops.iter().map(|l| l.iterations).max().unwrap_or(0);
            o.verdict = Some(if rep.verdict.is_accept() {
                Checked::Accept
            } else {
                Checked::Reject
            });
        }
        Err(TypeError::IterationBound { .. }) => o.bound_hit = true,
        Err(_) => {}
    }
    if let Some((verdict, excluded)) = while_oracle(cfg.mode, &cmd, &policy, &spec) {
        o.excluded = excluded;
        o.oracle = Some(verdict.holds());
        if matches!(o.verdict, Some(Checked::Accept)) && !verdict.holds() {
            let small = shrink_while(cfg.mode, cmd, &policy, &spec);
            let verdict = while_oracle(cfg.mode, &small, &policy, &spec)
                .map(|v| v.0)
                .unwrap_or(verdict);
            o.failure = Some(SoundnessFailure {
                index,
                program: small.to_string(),
                policy: policy.to_file(),
                counterexample: cex_json(&verdict),
            });
        }
    }
    o
}

fn fuzz_ir_one(cfg: &FuzzConfig, index: usize) -> Outcome {
    let mut rng = program_rng(cfg.seed, index);
    let (prog, file) = gen_ir(&mut rng, &cfg.ir_gen);
    let mut o = Outcome::default();
    let Ok(policy) = crate::ir_typing::ir_policy(&prog, &file) else {
        return o;
    };
    let ck = match IrChecker::new(&prog, policy.clone()) {
        Ok(ck) => ck,
        Err(_) => return o,
    };
    let ck = match cfg.mutation {
        Some(m) => ck.with_mutation(m),
        None => ck,
    };
    match ir_verdict_with(&ck) {
        Ok(rep) => {
            o.kildall_visits = rep.flow.as_ref().map_or(0, |f| f.visits);
            o.verdict = Some(match rep.verdict {
                IrVerdict::Accept => Checked::Accept,
                IrVerdict::Reject { .. } => Checked::Reject,
                IrVerdict::NotWellTyped { .. } => Checked::NotWellTyped,
            });
        }
        Err(IrTypeError::IterationBound(_)) => o.bound_hit = true,
        Err(_) => {}
    }
    let spec = EnumSpec::new(cfg.domain, cfg.cap);
    if let Ok(r) = check_osct_ir(&prog, &policy, &spec) {
        o.excluded = r.timeouts + r.errors;
        o.oracle = Some(r.verdict.holds());
        if matches!(o.verdict, Some(Checked::Accept)) && !r.verdict.holds() {
            o.failure = Some(SoundnessFailure {
                index,
                program: prog.to_string(),
                policy: file,
                counterexample: cex_json(&r.verdict),
            });
        }
    }
    o
}

fn campaign(cfg: &FuzzConfig, one: impl Fn(&FuzzConfig, usize) -> Outcome + Sync) -> FuzzStats {
    let outcomes: Vec<Outcome> = (0..cfg.count)
        .into_par_iter()
        .map(|i| one(cfg, i))
        .collect();
    let mut stats = FuzzStats::default();
    for o in outcomes {
        stats.absorb(o);
    }
    stats
}

/// Checks `cfg.count` random While programs against the oracle matching
/// `cfg.mode`.
pub fn fuzz_while(cfg: &FuzzConfig) -> FuzzStats {
    campaign(cfg, fuzz_while_one)
}

/// Checks `cfg.count` random IR programs against the IR oracle.
pub fn fuzz_ir(cfg: &FuzzConfig) -> FuzzStats {
    campaign(cfg, fuzz_ir_one)
}
