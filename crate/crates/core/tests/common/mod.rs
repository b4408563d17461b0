#![allow(dead_code)]

pub mod golden;
pub mod laws;

use std::collections::BTreeMap;
use std::path::PathBuf;

use oscta::cli::{main_with, Io};

pub fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

/// Runs the command line in-process: exit code, stdout, stderr.
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["oscta"];
    argv.extend_from_slice(args);
    let code = main_with(
        argv,
        &mut Io {
            out: &mut out,
            err: &mut err,
        },
    );
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

/// A type written as a list of atom names; `~o` marks a symbolic atom.
pub fn ty(atoms: &[&str]) -> String {
    let mut real: Vec<&str> = atoms
        .iter()
        .copied()
        .filter(|a| !a.starts_with('~'))
        .collect();
    let mut sym: Vec<&str> = atoms
        .iter()
        .copied()
        .filter(|a| a.starts_with('~'))
        .collect();
    real.sort();
    sym.sort();
    real.extend(sym);
    format!("{{{}}}", real.join(", "))
}

/// Parses `name: {..}` lines into a map.
pub fn env_lines<'a>(lines: impl Iterator<Item = &'a str>) -> BTreeMap<String, String> {
    lines
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Splits text into sections headed by lines starting with `marker`.
pub fn sections<'a>(text: &'a str, marker: &str) -> Vec<(String, Vec<&'a str>)> {
    let mut out: Vec<(String, Vec<&str>)> = Vec::new();
    for line in text.lines() {
        if let Some(h) = line.strip_prefix(marker) {
            out.push((h.trim().to_string(), Vec::new()));
        } else if let Some(last) = out.last_mut() {
            last.1.push(line);
        }
    }
    out
}
