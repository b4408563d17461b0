//! Exhaustive small-domain checks of output-sensitive noninterference and
//! output-sensitive constant-time.
//!
//! Every initial store over values `0..d` is run. Runs are grouped by their
//! initial inputs and final outputs; inside a group every observation must
//! agree. Runs that hit the step cap or fail at runtime are left out and
//! counted as warnings.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_bigint::BigInt;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::ir::{initial_state, run_ir, IrProgram, IrRunError};
use crate::secenv::{Policy, LEAK_VAR};
use crate::trace::{render_trace, LeakEvent, Value};
use crate::while_lang::{run, Cmd, RunError, Store};

/// Default cap on the number of enumerated stores.
pub const DEFAULT_BUDGET: u128 = 1 << 20;

/// Environment variable overriding [`DEFAULT_BUDGET`].
pub const BUDGET_VAR: &str = "OSCTA_BUDGET";

const CHUNK: usize = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("enumeration needs {needed} stores but the budget is {budget}")]
    Budget { needed: String, budget: u128 },
    #[error("the value domain must contain at least one value")]
    EmptyDomain,
    #[error("pinned cell `{0}` does not exist")]
    UnknownPin(String),
    #[error("`{0}` is not a memory block or register of the program")]
    UnknownName(String),
}

/// What is enumerated and how long each run may take.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnumSpec {
    /// Values range over `0..domain`.
    pub domain: u32,
    pub cap: u64,
    pub budget: u128,
    /// Cells held at a fixed value, named `x` or `a[1]`.
    pub pins: BTreeMap<String, i64>,
}

impl EnumSpec {
    pub fn new(domain: u32, cap: u64) -> Self {
        EnumSpec {
            domain,
            cap,
            budget: DEFAULT_BUDGET,
            pins: BTreeMap::new(),
        }
    }

    /// Reads the budget from `OSCTA_BUDGET` when it is set and parses.
    pub fn with_env_budget(mut self) -> Self {
        if let Some(b) = std::env::var(BUDGET_VAR)
            .ok()
            .and_then(|s| s.trim().parse().ok())
        {
            self.budget = b;
        }
        self
    }

    pub fn pin(mut self, cell: impl Into<String>, v: i64) -> Self {
        self.pins.insert(cell.into(), v);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    Osni,
    Osct,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub first: Json,
    pub second: Json,
    /// The differing variable or the first differing trace position.
    pub difference: String,
    pub first_observation: String,
    pub second_observation: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleVerdict {
    Holds,
    Counterexample(Box<Counterexample>),
}

impl OracleVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, OracleVerdict::Holds)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleReport {
    pub property: Property,
    pub verdict: OracleVerdict,
    pub stores: u64,
    pub timeouts: u64,
    pub errors: u64,
    pub warnings: Vec<String>,
}

impl OracleReport {
    pub fn to_json(&self) -> Json {
        let cex = match &self.verdict {
            OracleVerdict::Holds => Json::Null,
            OracleVerdict::Counterexample(c) => json!({
                "first": c.first,
                "second": c.second,
                "difference": c.difference,
                "first_observation": c.first_observation,
                "second_observation": c.second_observation,
            }),
        };
        json!({
            "property": self.property,
            "verdict": if self.verdict.holds() { "holds" } else { "counterexample" },
            "counterexample": cex,
            "stores": self.stores,
            "timeouts": self.timeouts,
            "errors": self.errors,
            "warnings": self.warnings,
        })
    }
}

/// Result of running one enumerated store.
enum Exec {
    Done { key: Vec<String>, obs: Observation },
    Timeout,
    Failed,
}

/// Named observations (variables) or positional ones (trace events).
#[derive(Clone, PartialEq, Eq)]
enum Observation {
    Named(Vec<(String, String)>),
    Trace(Vec<LeakEvent>),
}

impl Observation {
    fn render(&self) -> String {
        match self {
            Observation::Named(v) => {
                let parts: Vec<String> = v.iter().map(|(k, x)| format!("{k} = {x}")).collect();
                parts.join(", ")
            }
            Observation::Trace(t) => render_trace(t),
        }
    }

    fn difference(&self, other: &Observation) -> String {
        match (self, other) {
            (Observation::Named(a), Observation::Named(b)) => a
                .iter()
                .zip(b)
                .find(|(x, y)| x != y)
                .map(|(x, _)| format!("variable {}", x.0))
                .unwrap_or_else(|| "variables".into()),
            (Observation::Trace(a), Observation::Trace(b)) => {
                let k = a.iter().zip(b).take_while(|(x, y)| x == y).count();
                format!("trace position {k}")
            }
            _ => "observation".into(),
        }
    }
}

/// The enumerable cells of a program and how to run one assignment.
trait Subject: Sync {
    fn cells(&self) -> &[String];
    fn exec(&self, vals: &[BigInt]) -> Exec;
    fn store_json(&self, vals: &[BigInt]) -> Json;
}

struct Layout {
    free: Vec<usize>,
    fixed: Vec<Option<BigInt>>,
    total: u64,
}

fn layout(cells: &[String], spec: &EnumSpec) -> Result<Layout, OracleError> {
    if spec.domain == 0 {
        return Err(OracleError::EmptyDomain);
    }
    if let Some(p) = spec.pins.keys().find(|p| !cells.contains(p)) {
        return Err(OracleError::UnknownPin(p.clone()));
    }
    let fixed: Vec<Option<BigInt>> = cells
        .iter()
        .map(|c| spec.pins.get(c).map(|v| BigInt::from(*v)))
        .collect();
    let free: Vec<usize> = (0..cells.len()).filter(|&i| fixed[i].is_none()).collect();
    let needed = BigInt::from(spec.domain).pow(free.len() as u32);
    if needed > BigInt::from(spec.budget) {
        return Err(OracleError::Budget {
            needed: needed.to_string(),
            budget: spec.budget,
        });
    }
    let total = u64::try_from(needed).expect("budget fits in u64");
    Ok(Layout { free, fixed, total })
}

/// Store number `idx` in canonical order: the first free cell is the most
/// significant digit.
fn decode(l: &Layout, d: u32, mut idx: u64) -> Vec<BigInt> {
    let mut vals: Vec<BigInt> = l
        .fixed
        .iter()
        .map(|f| f.clone().unwrap_or_default())
        .collect();
    for &c in l.free.iter().rev() {
        vals[c] = BigInt::from(idx % u64::from(d));
        idx /= u64::from(d);
    }
    vals
}

fn violates<S: Subject + ?Sized>(s: &S, a: &[BigInt], b: &[BigInt]) -> bool {
    match (s.exec(a), s.exec(b)) {
        (Exec::Done { key: ka, obs: oa }, Exec::Done { key: kb, obs: ob }) => ka == kb && oa != ob,
        _ => false,
    }
}

/// Greedy descent: lower single cells toward 0 while the pair stays a
/// violation.
fn minimize<S: Subject + ?Sized>(
    s: &S,
    l: &Layout,
    mut a: Vec<BigInt>,
    mut b: Vec<BigInt>,
) -> (Vec<BigInt>, Vec<BigInt>) {
    loop {
        let mut improved = false;
        for side in 0..2 {
            for &c in &l.free {
                let cur = if side == 0 {
                    a[c].clone()
                } else {
                    b[c].clone()
                };
                let mut cand = BigInt::default();
                while cand < cur {
                    let (mut na, mut nb) = (a.clone(), b.clone());
                    if side == 0 {
                        na[c] = cand.clone();
                    } else {
                        nb[c] = cand.clone();
                    }
                    if violates(s, &na, &nb) {
                        a = na;
                        b = nb;
                        improved = true;
                        break;
                    }
                    cand += 1;
                }
            }
        }
        if !improved {
            return (a, b);
        }
    }
}

fn check<S: Subject>(
    s: &S,
    spec: &EnumSpec,
    property: Property,
) -> Result<OracleReport, OracleError> {
    let l = layout(s.cells(), spec)?;
    // Group key -> index of the first run with that key and its observation.
    let mut groups: HashMap<Vec<String>, (u64, Observation)> = HashMap::new();
    let mut best: Option<(u64, u64)> = None;
    let (mut timeouts, mut errors) = (0u64, 0u64);
    let mut start = 0u64;
    while start < l.total {
        let end = (start + CHUNK as u64).min(l.total);
        let results: Vec<Exec> = (start..end)
            .into_par_iter()
            .map(|i| s.exec(&decode(&l, spec.domain, i)))
            .collect();
        for (i, r) in (start..end).zip(results) {
            match r {
                Exec::Timeout => timeouts += 1,
                Exec::Failed => errors += 1,
                Exec::Done { key, obs } => match groups.entry(key) {
                    Entry::Vacant(v) => {
                        v.insert((i, obs));
                    }
                    Entry::Occupied(o) => {
                        let (first, ref fobs) = *o.get();
                        if *fobs != obs && best.is_none_or(|b| (first, i) < b) {
                            best = Some((first, i));
                        }
                    }
                },
            }
        }
        start = end;
    }
    let mut warnings = Vec::new();
    if timeouts > 0 {
        warnings.push(format!(
            "{timeouts} runs hit the step cap of {} and were excluded",
            spec.cap
        ));
    }
    if errors > 0 {
        warnings.push(format!("{errors} runs failed at runtime and were excluded"));
    }
    let verdict = match best {
        None => OracleVerdict::Holds,
        Some((i, j)) => {
            let (a, b) = minimize(
                s,
                &l,
                decode(&l, spec.domain, i),
                decode(&l, spec.domain, j),
            );
            let (Exec::Done { obs: oa, .. }, Exec::Done { obs: ob, .. }) = (s.exec(&a), s.exec(&b))
            else {
                unreachable!("minimized pair completes")
            };
            OracleVerdict::Counterexample(Box::new(Counterexample {
                first: s.store_json(&a),
                second: s.store_json(&b),
                difference: oa.difference(&ob),
                first_observation: oa.render(),
                second_observation: ob.render(),
            }))
        }
    };
    Ok(OracleReport {
        property,
        verdict,
        stores: l.total,
        timeouts,
        errors,
        warnings,
    })
}

/// Cell names of a While policy: scalars, then array cells.
fn while_cells(p: &Policy) -> Vec<String> {
    let mut cells: Vec<String> = p.scalars().iter().cloned().collect();
    for (a, n) in p.arrays() {
        cells.extend((0..*n).map(|i| format!("{a}[{i}]")));
    }
    cells
}

struct WhileSubject<'a> {
    cmd: &'a Cmd,
    policy: &'a Policy,
    cells: Vec<String>,
    cap: u64,
    property: Property,
}

impl WhileSubject<'_> {
    fn store(&self, vals: &[BigInt]) -> Store {
        let mut s = Store::zeroed(self.policy);
        let mut k = 0;
        for x in self.policy.scalars() {
            s.scalars.insert(x.clone(), vals[k].clone());
            k += 1;
        }
        for (a, n) in self.policy.arrays() {
            s.arrays.insert(a.clone(), vals[k..k + n].to_vec());
            k += n;
        }
        s
    }
}

fn project(s: &Store, name: &str) -> String {
    if name == LEAK_VAR {
        return render_trace(&s.xl);
    }
    if let Some(v) = s.scalars.get(name) {
        return v.to_string();
    }
    match s.arrays.get(name) {
        Some(cells) => {
            let parts: Vec<String> = cells.iter().map(ToString::to_string).collect();
            format!("[{}]", parts.join(", "))
        }
        None => String::new(),
    }
}

impl Subject for WhileSubject<'_> {
    fn cells(&self) -> &[String] {
        &self.cells
    }

    fn exec(&self, vals: &[BigInt]) -> Exec {
        let init = self.store(vals);
        let mut key: Vec<String> = self
            .policy
            .inputs()
            .iter()
            .map(|x| project(&init, x))
            .collect();
        match run(self.cmd, init, self.cap) {
            Ok(out) => {
                key.extend(self.policy.outputs().iter().map(|o| project(&out.store, o)));
                let obs = match self.property {
                    Property::Osni => Observation::Named(
                        self.policy
                            .leaks()
                            .iter()
                            .map(|l| (l.clone(), project(&out.store, l)))
                            .collect(),
                    ),
                    Property::Osct => Observation::Trace(out.trace),
                };
                Exec::Done { key, obs }
            }
            Err(RunError::Timeout(_)) => Exec::Timeout,
            Err(_) => Exec::Failed,
        }
    }

    fn store_json(&self, vals: &[BigInt]) -> Json {
        let mut j = self.store(vals).to_json();
        if let Some(m) = j.as_object_mut() {
            m.remove(LEAK_VAR);
        }
        j
    }
}

fn check_while(
    c: &Cmd,
    policy: &Policy,
    spec: &EnumSpec,
    property: Property,
) -> Result<OracleReport, OracleError> {
    let s = WhileSubject {
        cmd: c,
        policy,
        cells: while_cells(policy),
        cap: spec.cap,
        property,
    };
    check(&s, spec, property)
}

/// Output-sensitive noninterference of `c`: runs with equal inputs and
/// equal final outputs end with equal leaked variables.
pub fn check_osni(c: &Cmd, policy: &Policy, spec: &EnumSpec) -> Result<OracleReport, OracleError> {
    check_while(c, policy, spec, Property::Osni)
}

/// Output-sensitive constant-time of `c`: runs with equal inputs and equal
/// final outputs produce identical leakage traces.
pub fn check_osct(c: &Cmd, policy: &Policy, spec: &EnumSpec) -> Result<OracleReport, OracleError> {
    check_while(c, policy, spec, Property::Osct)
}

struct IrSubject<'a> {
    prog: &'a IrProgram,
    inputs: Vec<String>,
    outputs: Vec<String>,
    cells: Vec<String>,
    cap: u64,
}

impl IrSubject<'_> {
    fn memory(&self, vals: &[BigInt]) -> BTreeMap<String, Vec<BigInt>> {
        let mut k = 0;
        let mut m = BTreeMap::new();
        for (b, n) in &self.prog.memory {
            m.insert(b.clone(), vals[k..k + n].to_vec());
            k += n;
        }
        m
    }
}

fn render_cells(cells: &[Value]) -> String {
    let parts: Vec<String> = cells.iter().map(ToString::to_string).collect();
    format!("[{}]", parts.join(", "))
}

impl Subject for IrSubject<'_> {
    fn cells(&self) -> &[String] {
        &self.cells
    }

    fn exec(&self, vals: &[BigInt]) -> Exec {
        let mem = self.memory(vals);
        let mut key: Vec<String> = self
            .inputs
            .iter()
            .map(|b| {
                let parts: Vec<String> = mem[b].iter().map(ToString::to_string).collect();
                parts.join(",")
            })
            .collect();
        let Ok(state) = initial_state(self.prog, &mem) else {
            return Exec::Failed;
        };
        match run_ir(self.prog, state, self.cap) {
            Ok(out) => {
                for o in &self.outputs {
                    key.push(match out.state.mem.get(o) {
                        Some(cells) => render_cells(cells),
                        None => out
                            .state
                            .regs
                            .get(o)
                            .map(ToString::to_string)
                            .unwrap_or_default(),
                    });
                }
                Exec::Done {
                    key,
                    obs: Observation::Trace(out.trace),
                }
            }
            Err(IrRunError::Timeout(_)) => Exec::Timeout,
            Err(_) => Exec::Failed,
        }
    }

    fn store_json(&self, vals: &[BigInt]) -> Json {
        let m: serde_json::Map<String, Json> = self
            .memory(vals)
            .into_iter()
            .map(|(b, cells)| {
                (
                    b,
                    Json::Array(cells.iter().map(crate::trace::bigint_json).collect()),
                )
            })
            .collect();
        Json::Object(m)
    }
}

/// Output-sensitive constant-time of an IR program over all contents of its
/// memory blocks. Inputs are memory blocks; outputs are registers or blocks.
pub fn check_osct_ir(
    p: &IrProgram,
    policy: &Arc<Policy>,
    spec: &EnumSpec,
) -> Result<OracleReport, OracleError> {
    for n in policy.inputs().iter().chain(policy.outputs()) {
        if !p.memory.contains_key(n) && !p.registers.contains(n) {
            return Err(OracleError::UnknownName(n.clone()));
        }
    }
    let mut cells = Vec::new();
    for (b, n) in &p.memory {
        cells.extend((0..*n).map(|i| format!("{b}[{i}]")));
    }
    let s = IrSubject {
        prog: p,
        inputs: policy.inputs().iter().cloned().collect(),
        outputs: policy.outputs().iter().cloned().collect(),
        cells,
        cap: spec.cap,
    };
    check(&s, spec, Property::Osct)
}
