//! Acceptance criteria, one line each. Run with `cargo test --test acceptance`.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::golden;
use common::laws::{all_graphs, compare_graph_with, family_graphs, RegionStarts, LAWS};
use num_bigint::BigInt;
use oscta::fuzz::{fuzz_ir, fuzz_while, gen_while, program_rng, FuzzConfig, FuzzStats, WhileGen};
use oscta::instrument::check_equivalences;
use oscta::while_lang::Store;
use oscta::while_typing::Mode;
use oscta::Policy;
use rand::rngs::StdRng;
use rand::SeedableRng;

const SEED: u64 = 7;
const LAW_CASES: usize = 10_000;

struct Outcome {
    ok: bool,
    detail: String,
}

impl Outcome {
    fn check(ok: bool, detail: impl Into<String>) -> Self {
        Outcome {
            ok,
            detail: detail.into(),
        }
    }

    fn from(r: Result<(), String>) -> Self {
        match r {
            Ok(()) => Outcome::check(true, "exact match"),
            Err(e) => Outcome::check(false, e),
        }
    }
}

/// Running totals for the termination criterion.
#[derive(Default)]
struct Bounds {
    hits: usize,
    max_loop_iterations: usize,
    max_kildall_visits: usize,
    runs: usize,
}

impl Bounds {
    fn absorb(&mut self, s: &FuzzStats) {
        self.hits += s.bound_hits;
        self.max_loop_iterations = self.max_loop_iterations.max(s.max_loop_iterations);
        self.max_kildall_visits = self.max_kildall_visits.max(s.max_kildall_visits);
        self.runs += s.programs;
    }
}

/// Every store assigning 0 or 1 to each scalar and array cell.
fn binary_stores(p: &Policy) -> Vec<Store> {
    let zero = Store::zeroed(p);
    let cells = zero.scalars.len() + zero.arrays.values().map(Vec::len).sum::<usize>();
    (0u32..1 << cells)
        .map(|bits| {
            let mut s = zero.clone();
            let mut k = 0;
            let mut next = || {
                let v = BigInt::from((bits >> k) & 1);
                k += 1;
                v
            };
            for v in s.scalars.values_mut() {
                *v = next();
            }
            for cells in s.arrays.values_mut() {
                for v in cells {
                    *v = next();
                }
            }
            s
        })
        .collect()
}

fn instrumentation_equivalence(bounds: &mut Bounds) -> Outcome {
    let (mut env_mismatches, mut trace_mismatches, mut stores, mut skipped) = (0, 0, 0, 0);
    for i in 0..200 {
        let (p, c): (Arc<Policy>, _) = gen_while(&mut program_rng(SEED, i), &WhileGen::default());
        let all = binary_stores(&p);
        stores += all.len();
        match check_equivalences(&c, &p, &all, 10_000) {
            Ok(r) => {
                env_mismatches += r.env_mismatches.len();
                trace_mismatches += r.trace_mismatches.len();
                skipped += r.skipped_runs;
            }
            Err(e) => {
                bounds.hits += 1;
                return Outcome::check(false, format!("program {i}: {e}"));
            }
        }
        bounds.runs += 1;
    }
    Outcome::check(
        env_mismatches == 0 && trace_mismatches == 0,
        format!(
            "200 programs, {stores} stores ({skipped} runs hit the step cap), \
             {env_mismatches} environment and {trace_mismatches} trace mismatches"
        ),
    )
}

fn fuzz_outcome(s: &FuzzStats) -> Outcome {
    Outcome::check(
        s.failures.is_empty(),
        format!(
            "{} programs, {} accepted, {} rejected, {} not well typed, {} soundness failures",
            s.programs,
            s.accepted,
            s.rejected,
            s.not_well_typed,
            s.failures.len()
        ),
    )
}

fn algebra() -> Outcome {
    let mut total = 0;
    for (name, law) in LAWS {
        let mut rng = StdRng::seed_from_u64(SEED);
        for case in 0..LAW_CASES {
            if let Err(e) = law(&mut rng) {
                return Outcome::check(false, format!("{name}, case {case}: {e}"));
            }
        }
        total += LAW_CASES;
    }
    Outcome::check(
        true,
        format!(
            "{} laws x {LAW_CASES} cases = {total}, 0 violations",
            LAWS.len()
        ),
    )
}

fn graphs() -> Outcome {
    let mut count = 0;
    for n in 1..=4 {
        for g in all_graphs(n) {
            if let Err(e) = compare_graph_with(&g, RegionStarts::All) {
                return Outcome::check(false, e);
            }
            count += 1;
        }
    }
    for n in 1..=6 {
        let starts = if n <= 5 {
            RegionStarts::All
        } else {
            RegionStarts::Idom
        };
        for g in family_graphs(n) {
            if let Err(e) = compare_graph_with(&g, starts) {
                return Outcome::check(false, e);
            }
            count += 1;
        }
    }
    Outcome::check(true, format!("{count} graphs, 0 mismatches"))
}

fn main() -> ExitCode {
    let mut bounds = Bounds::default();
    let mut failed = 0;
    let mut report = |n: u32, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let t = start.elapsed();
        let pass = o.ok && t < limit;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n} {name}: {} ({}; {:.2}s, limit {}s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            t.as_secs_f64(),
            limit.as_secs()
        );
    };
    let sec = Duration::from_secs;

    report(1, "three-output derivation", sec(1), &mut || {
        Outcome::from(golden::three_outputs())
    });
    report(2, "buffer-copy IR derivation", sec(1), &mut || {
        Outcome::from(golden::buffer_copy())
    });
    report(3, "password checker pair", sec(1), &mut || {
        Outcome::from(golden::password())
    });
    report(4, "instrumentation equivalence", sec(120), &mut || {
        instrumentation_equivalence(&mut bounds)
    });
    report(5, "While soundness fuzzing", sec(600), &mut || {
        let cfg = FuzzConfig {
            seed: SEED,
            count: 500,
            mode: Mode::ConstantTime,
            ..FuzzConfig::default()
        };
        let s = fuzz_while(&cfg);
        bounds.absorb(&s);
        fuzz_outcome(&s)
    });
    report(6, "IR soundness fuzzing", sec(600), &mut || {
        let cfg = FuzzConfig {
            seed: SEED,
            count: 200,
            ..FuzzConfig::default()
        };
        let s = fuzz_ir(&cfg);
        bounds.absorb(&s);
        fuzz_outcome(&s)
    });
    report(7, "algebra suite", sec(60), &mut algebra);
    report(8, "dep and region oracle", sec(60), &mut graphs);
    report(9, "termination bounds", sec(1), &mut || {
        Outcome::check(
            bounds.hits == 0,
            format!(
                "{} bound hits over {} typed programs plus criteria 1-3; \
                 max loop iterations {}, max worklist visits {}",
                bounds.hits, bounds.runs, bounds.max_loop_iterations, bounds.max_kildall_visits
            ),
        )
    });

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
