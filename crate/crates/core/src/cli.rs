//! Command-line driver.
//!
//! Exit codes: 0 for accept or holds, 1 for reject or counterexample, 2 for
//! usage, input and parse errors, 3 for internal failures such as an
//! ill-formed environment or an exhausted iteration bound.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use serde_json::{json, Value as Json};

use crate::fuzz::{fuzz_ir, fuzz_while, FuzzConfig, FuzzStats};
use crate::instrument::instrument;
use crate::ir::{initial_state, parse_ir, run_ir, IrProgram};
use crate::ir_graphs::{hammock_region, Graphs};
use crate::ir_typing::{
    ir_policy, ir_verdict_with, render_envs, IrChecker, IrTypeError, IrVerdict,
};
use crate::oracle::{check_osct, check_osct_ir, check_osni, EnumSpec, OracleReport, OracleVerdict};
use crate::secenv::{EnvError, Policy, PolicyFile};
use crate::trace::render_trace;
use crate::while_lang::{parse_cmd, parse_program, run, Cmd, Store};
use crate::while_typing::{check_program, Mode, TypeError, Verdict, WhileReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "oscta",
    version,
    about = "Output-sensitive noninterference and constant-time checker"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Type a While program.
    Check(CheckArgs),
    /// Type an IR program.
    CheckIr(CheckIrArgs),
    /// Run a program and print its final store and leakage trace.
    Run(RunArgs),
    /// Print the instrumented program.
    Instrument(InstrumentArgs),
    /// Decide a property by exhaustive enumeration.
    Oracle(OracleArgs),
    /// Soundness fuzzing of a checker against the oracle.
    Fuzz(FuzzArgs),
    /// Print dominators, dependencies, regions and points-to facts.
    DumpCfg(DumpCfgArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("mode").required(true).args(["base", "ct"])))]
pub struct CheckArgs {
    /// Output-sensitive noninterference typing.
    #[arg(long)]
    pub base: bool,
    /// Output-sensitive constant-time typing.
    #[arg(long)]
    pub ct: bool,
    pub program: PathBuf,
    pub policy: PathBuf,
}

#[derive(Args, Debug)]
pub struct CheckIrArgs {
    pub program: PathBuf,
    pub policy: PathBuf,
    /// Print the environment at every control point.
    #[arg(long)]
    pub dump_env: bool,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    pub program: PathBuf,
    /// Initial store: scalars and arrays for While, memory blocks for IR.
    #[arg(long)]
    pub store: PathBuf,
    /// Validate the store against this policy.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    pub cap: u64,
}

#[derive(Args, Debug)]
pub struct InstrumentArgs {
    pub program: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OracleMode {
    Osni,
    Osct,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub mode: OracleMode,
    #[arg(long, default_value_t = 2)]
    pub domain: u32,
    #[arg(long, default_value_t = 10_000)]
    pub cap: u64,
    /// Hold a cell fixed, as `name=value` or `a[1]=value`.
    #[arg(long = "pin", value_parser = parse_pin)]
    pub pins: Vec<(String, i64)>,
    pub policy: PathBuf,
    pub program: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Lang {
    While,
    Ir,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FuzzMode {
    Base,
    Ct,
}

#[derive(Args, Debug)]
pub struct FuzzArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = Lang::While)]
    pub lang: Lang,
    /// Typing mode for While programs.
    #[arg(long, value_enum, default_value_t = FuzzMode::Ct)]
    pub mode: FuzzMode,
    #[arg(long, default_value_t = 2)]
    pub domain: u32,
    #[arg(long, default_value_t = 10_000)]
    pub cap: u64,
}

#[derive(Args, Debug)]
pub struct DumpCfgArgs {
    pub program: PathBuf,
    /// Exclude the dependent block itself from the `between` set of `dep`.
    #[arg(long)]
    pub dep_exclusive: bool,
}

fn parse_pin(s: &str) -> Result<(String, i64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v = v
        .trim()
        .parse()
        .map_err(|_| format!("`{v}` is not an integer"))?;
    Ok((k.trim().to_string(), v))
}

/// A failure with its exit code and message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(m: impl Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: m.to_string(),
    }
}

fn internal(m: impl Display) -> Failure {
    Failure {
        code: EXIT_INTERNAL,
        message: m.to_string(),
    }
}

fn from_type_error(e: TypeError) -> Failure {
    match e {
        TypeError::Undeclared(_) => usage(e),
        _ => internal(e),
    }
}

fn from_ir_error(e: IrTypeError) -> Failure {
    match e {
        IrTypeError::Graph(_) | IrTypeError::Policy(_) => usage(e),
        IrTypeError::Env(EnvError::Unknown(_)) => usage(e),
        _ => internal(e),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_policy(path: &Path) -> Result<Arc<Policy>, Failure> {
    Policy::from_json(&read(path)?)
        .map(Arc::new)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_policy_file(path: &Path) -> Result<PolicyFile, Failure> {
    PolicyFile::from_json(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_while(path: &Path, policy: &Policy) -> Result<Cmd, Failure> {
    parse_program(&read(path)?, policy).map_err(|e| usage(format!("{}:{e}", path.display())))
}

fn load_ir(path: &Path) -> Result<IrProgram, Failure> {
    parse_ir(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn is_ir(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "ir" || e == "ll")
}

fn pretty(v: &Json) -> String {
    serde_json::to_string_pretty(v).expect("JSON values serialise")
}

/// Output sink for one invocation.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

macro_rules! say {
    ($w:expr, $($t:tt)*) => {
        writeln!($w, $($t)*).map_err(|e| internal(format!("write failed: {e}")))?
    };
}

fn check_while(a: &CheckArgs, json: bool, io: &mut Io<'_>) -> Result<i32, Failure> {
    let policy = load_policy(&a.policy)?;
    let cmd = load_while(&a.program, &policy)?;
    let mode = if a.ct { Mode::ConstantTime } else { Mode::Base };
    let rep = check_program(mode, policy, &cmd).map_err(from_type_error)?;
    if json {
        say!(io.out, "{}", pretty(&rep.to_json()));
    } else {
        write_while_report(&rep, io)?;
    }
    Ok(if rep.verdict.is_accept() {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    })
}

fn write_while_report(rep: &WhileReport, io: &mut Io<'_>) -> Result<(), Failure> {
    for (k, step) in rep.derivation.iter().enumerate() {
        say!(io.out, "== {} {}", k + 1, step.label);
        say!(io.out, "pc: {}", step.pc);
        write!(io.out, "{}", step.env).map_err(internal)?;
    }
    say!(io.out, "== final");
    write!(io.out, "{}", rep.final_env).map_err(internal)?;
    for l in &rep.loops {
        say!(
            io.out,
            "loop {} `{}`: {} iterations",
            l.id,
            l.condition,
            l.iterations
        );
    }
    match &rep.verdict {
        Verdict::Accept => say!(io.out, "verdict: accept"),
        Verdict::Reject { witness } => say!(io.out, "verdict: reject, witness {witness}"),
    }
    Ok(())
}

fn check_ir(a: &CheckIrArgs, json: bool, io: &mut Io<'_>) -> Result<i32, Failure> {
    let p = load_ir(&a.program)?;
    let file = load_policy_file(&a.policy)?;
    let policy = ir_policy(&p, &file).map_err(|e| usage(format!("{}: {e}", a.policy.display())))?;
    let ck = IrChecker::new(&p, policy).map_err(from_ir_error)?;
    let rep = ir_verdict_with(&ck).map_err(from_ir_error)?;
    if json {
        say!(io.out, "{}", pretty(&rep.to_json(&p)));
    } else {
        if let (true, Some(flow)) = (a.dump_env, &rep.flow) {
            write!(io.out, "{}", render_envs(&ck, flow).map_err(from_ir_error)?)
                .map_err(internal)?;
        }
        if let Some(g) = &rep.exit_env {
            say!(io.out, "== exit");
            write!(io.out, "{g}").map_err(internal)?;
        }
        match &rep.verdict {
            IrVerdict::Accept => say!(io.out, "verdict: accept"),
            IrVerdict::Reject { witness } => say!(io.out, "verdict: reject, witness {witness}"),
            IrVerdict::NotWellTyped { reason } => say!(io.out, "verdict: not well typed, {reason}"),
        }
    }
    Ok(if rep.verdict.is_accept() {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    })
}

fn ir_memory(text: &str) -> Result<std::collections::BTreeMap<String, Vec<BigInt>>, Failure> {
    let v: Json = serde_json::from_str(text).map_err(|e| usage(format!("store: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| usage("store: expected a JSON object"))?;
    let mut m = std::collections::BTreeMap::new();
    for (k, cells) in obj {
        let cells = cells
            .as_array()
            .ok_or_else(|| usage(format!("store: `{k}` must be an array")))?;
        let vals = cells
            .iter()
            .map(|c| match c {
                Json::Number(n) => n.as_i64().map(BigInt::from),
                Json::String(s) => s.parse().ok(),
                _ => None,
            })
            .collect::<Option<Vec<BigInt>>>()
            .ok_or_else(|| usage(format!("store: `{k}` must hold integers")))?;
        m.insert(k.clone(), vals);
    }
    Ok(m)
}

fn run_program(a: &RunArgs, json: bool, io: &mut Io<'_>) -> Result<i32, Failure> {
    let store_text = read(&a.store)?;
    let (final_store, trace) = if is_ir(&a.program) {
        let p = load_ir(&a.program)?;
        let st = initial_state(&p, &ir_memory(&store_text)?).map_err(usage)?;
        match run_ir(&p, st, a.cap) {
            Ok(out) => {
                let regs: serde_json::Map<String, Json> = out
                    .state
                    .regs
                    .iter()
                    .map(|(k, v)| (k.clone(), json!(v)))
                    .collect();
                let mem: serde_json::Map<String, Json> = out
                    .state
                    .mem
                    .iter()
                    .map(|(k, v)| (k.clone(), json!(v)))
                    .collect();
                (json!({"registers": regs, "memory": mem}), out.trace)
            }
            Err(e) => {
                say!(io.err, "runtime error: {e}");
                return Ok(EXIT_NEGATIVE);
            }
        }
    } else {
        let policy = a.policy.as_deref().map(load_policy).transpose()?;
        let src = read(&a.program)?;
        let cmd = match &policy {
            Some(p) => parse_program(&src, p),
            None => parse_cmd(&src),
        }
        .map_err(|e| usage(format!("{}:{e}", a.program.display())))?;
        let store = Store::from_json(&store_text, policy.as_deref()).map_err(usage)?;
        match run(&cmd, store, a.cap) {
            Ok(out) => (out.store.to_json(), out.trace),
            Err(e) => {
                say!(io.err, "runtime error: {e}");
                return Ok(EXIT_NEGATIVE);
            }
        }
    };
    if json {
        say!(
            io.out,
            "{}",
            pretty(&json!({"store": final_store, "trace": trace}))
        );
    } else {
        say!(io.out, "store: {}", final_store);
        say!(io.out, "trace: {}", render_trace(&trace));
    }
    Ok(EXIT_OK)
}

fn instrument_program(a: &InstrumentArgs, io: &mut Io<'_>) -> Result<i32, Failure> {
    let c =
        parse_cmd(&read(&a.program)?).map_err(|e| usage(format!("{}:{e}", a.program.display())))?;
    let w = instrument(&c).map_err(usage)?;
    say!(io.out, "{w}");
    Ok(EXIT_OK)
}

fn write_oracle(rep: &OracleReport, json: bool, io: &mut Io<'_>) -> Result<i32, Failure> {
    for w in &rep.warnings {
        say!(io.err, "warning: {w}");
    }
    if json {
        say!(io.out, "{}", pretty(&rep.to_json()));
    } else {
        match &rep.verdict {
            OracleVerdict::Holds => say!(io.out, "holds over {} stores", rep.stores),
            OracleVerdict::Counterexample(c) => {
                say!(io.out, "counterexample at {}", c.difference);
                say!(io.out, "first:  {}", c.first);
                say!(io.out, "        {}", c.first_observation);
                say!(io.out, "second: {}", c.second);
                say!(io.out, "        {}", c.second_observation);
            }
        }
    }
    Ok(if rep.verdict.holds() {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    })
}

fn oracle(a: &OracleArgs, json: bool, io: &mut Io<'_>) -> Result<i32, Failure> {
    let mut spec = EnumSpec::new(a.domain, a.cap).with_env_budget();
    for (k, v) in &a.pins {
        spec = spec.pin(k.clone(), *v);
    }
    let rep = if is_ir(&a.program) {
        if a.mode == OracleMode::Osni {
            return Err(usage(
                "the IR oracle decides constant-time only; use --mode osct",
            ));
        }
        let p = load_ir(&a.program)?;
        let policy = ir_policy(&p, &load_policy_file(&a.policy)?).map_err(usage)?;
        check_osct_ir(&p, &policy, &spec)
    } else {
        let policy = load_policy(&a.policy)?;
        let c = load_while(&a.program, &policy)?;
        match a.mode {
            OracleMode::Osni => check_osni(&c, &policy, &spec),
            OracleMode::Osct => check_osct(&c, &policy, &spec),
        }
    }
    .map_err(usage)?;
    write_oracle(&rep, json, io)
}

fn fuzz(a: &FuzzArgs, json: bool, io: &mut Io<'_>) -> Result<i32, Failure> {
    let cfg = FuzzConfig {
        seed: a.seed,
        count: a.count,
        domain: a.domain,
        cap: a.cap,
        mode: match a.mode {
            FuzzMode::Base => Mode::Base,
            FuzzMode::Ct => Mode::ConstantTime,
        },
        ..FuzzConfig::default()
    };
    let stats: FuzzStats = match a.lang {
        Lang::While => fuzz_while(&cfg),
        Lang::Ir => fuzz_ir(&cfg),
    };
    if json {
        say!(
            io.out,
            "{}",
            pretty(&serde_json::to_value(&stats).expect("stats serialise"))
        );
    } else {
        say!(io.out, "programs:        {}", stats.programs);
        say!(io.out, "accepted:        {}", stats.accepted);
        say!(io.out, "rejected:        {}", stats.rejected);
        say!(io.out, "not well typed:  {}", stats.not_well_typed);
        say!(io.out, "oracle holds:    {}", stats.oracle_holds);
        say!(io.out, "imprecise:       {}", stats.imprecise);
        say!(io.out, "precision:       {:.3}", stats.precision());
        say!(io.out, "skipped:         {}", stats.skipped);
        say!(io.out, "excluded runs:   {}", stats.excluded_runs);
        say!(io.out, "bound hits:      {}", stats.bound_hits);
        say!(io.out, "soundness fails: {}", stats.failures.len());
        for f in &stats.failures {
            say!(io.out, "-- program {}\n{}", f.index, f.program);
            say!(
                io.out,
                "policy: {}",
                serde_json::to_string(&f.policy).expect("policy serialises")
            );
            say!(io.out, "counterexample: {}", f.counterexample);
        }
    }
    Ok(if stats.failures.is_empty() && stats.bound_hits == 0 {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    })
}

fn dump_cfg(a: &DumpCfgArgs, json: bool, io: &mut Io<'_>) -> Result<i32, Failure> {
    let p = load_ir(&a.program)?;
    let g = Graphs::with_dep_mode(&p, !a.dep_exclusive).map_err(usage)?;
    let mut v = g.to_json(&p);
    let mut regions = serde_json::Map::new();
    for &c in g.dom.live() {
        for b in p.successors(c) {
            if let Some(bp) = g.dom.idom[b] {
                let names: Vec<&str> = hammock_region(&p, bp, b, c)
                    .into_iter()
                    .map(|m| p.block_name(m))
                    .collect();
                regions.insert(
                    format!("{} -> {}", p.block_name(c), p.block_name(b)),
                    json!(names),
                );
            }
        }
    }
    v["regions"] = Json::Object(regions);
    if json {
        say!(io.out, "{}", pretty(&v));
    } else {
        for key in ["idom", "ipdom", "dep", "regions", "ptsto"] {
            say!(io.out, "== {key}");
            if let Some(m) = v[key].as_object() {
                for (k, x) in m {
                    say!(io.out, "{k}: {x}");
                }
            }
        }
    }
    Ok(EXIT_OK)
}

/// Runs one parsed invocation and returns its exit code.
pub fn execute(cli: &Cli, io: &mut Io<'_>) -> i32 {
    let r = match &cli.command {
        Command::Check(a) => check_while(a, cli.json, io),
        Command::CheckIr(a) => check_ir(a, cli.json, io),
        Command::Run(a) => run_program(a, cli.json, io),
        Command::Instrument(a) => instrument_program(a, io),
        Command::Oracle(a) => oracle(a, cli.json, io),
        Command::Fuzz(a) => fuzz(a, cli.json, io),
        Command::DumpCfg(a) => dump_cfg(a, cli.json, io),
    };
    match r {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(io.err, "error: {}", f.message);
            f.code
        }
    }
}

/// Parses `args` (program name first) and runs it.
pub fn main_with<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli, io),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() {
                &mut *io.err
            } else {
                &mut *io.out
            };
            let _ = write!(sink, "{text}");
            code
        }
    }
}
