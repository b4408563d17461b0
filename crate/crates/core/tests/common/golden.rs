//! Worked examples with environments transcribed by hand from the
//! published derivations.

#![allow(dead_code)]

use std::collections::BTreeMap;

use super::{cli, data, env_lines, sections, ty};

type Env = BTreeMap<String, String>;

fn env(pairs: &[(&str, &[&str])]) -> Env {
    pairs.iter().map(|(k, v)| (k.to_string(), ty(v))).collect()
}

fn with(base: &Env, changes: &[(&str, &[&str])]) -> Env {
    let mut e = base.clone();
    e.extend(env(changes));
    e
}

fn check<T: PartialEq + std::fmt::Debug>(
    got: T,
    want: T,
    what: impl std::fmt::Display,
) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got:?}, expected {want:?}"))
    }
}

/// Steps of the three-output example: label, pc, environment after the step.
/// Atoms X, O2 and the symbolic ~O3 are written x, o2, ~o3. The step that
/// opens the conditional leaves the environment unchanged.
pub fn three_outputs_expected() -> Vec<(&'static str, Vec<&'static str>, Env)> {
    let g0 = env(&[
        ("x", &["x"]),
        ("y", &["y"]),
        ("z", &["z"]),
        ("u", &["u"]),
        ("o1", &["o1"]),
        ("o2", &["o2"]),
        ("o3", &["o3"]),
        ("xl", &[]),
    ]);
    let g1 = with(&g0, &[("o1", &["x"])]);
    let g2 = with(&g1, &[("y", &["~o1", "z"])]);
    let g3 = with(&g2, &[("y", &["x", "z"]), ("o1", &["u"])]);
    let g4 = with(&g3, &[("z", &["~o1", "~o3"])]);
    let p5 = vec!["~o3", "o2", "x"];
    let g6 = with(
        &g4,
        &[("z", &["u", "~o3"]), ("o1", &["~o3", "o2", "x", "~o2"])],
    );
    let g7 = with(&g4, &[("o2", &["~o3", "o2", "x", "~o1"])]);
    let g8 = with(
        &g4,
        &[
            ("z", &["u", "~o3"]),
            ("o1", &["~o3", "o2", "x", "u"]),
            ("o2", &["~o3", "o2", "x", "u"]),
        ],
    );
    vec![
        ("1 o1 := x + 1", vec![], g1),
        ("2 y := o1 + z", vec![], g2),
        ("3 o1 := u", vec![], g3),
        ("4 z := o1 + o3", vec![], g4.clone()),
        ("5 if o2 == o3 + x", p5.clone(), g4),
        ("6 o1 := o2", p5.clone(), g6),
        ("7 o2 := o1", p5, g7),
        ("8 fi", vec![], g8),
    ]
}

/// Runs `check --base` on the three-output example and compares every step.
pub fn three_outputs() -> Result<(), String> {
    let (code, out, err) = cli(&[
        "check",
        "--base",
        &data("three_outputs.whl"),
        &data("three_outputs.pol"),
    ]);
    check(err.as_str(), "", "stderr")?;
    check(code, 1, "exit code")?;
    let steps = sections(&out, "== ");
    let expected = three_outputs_expected();
    check(steps.len(), expected.len() + 1, "number of sections")?;
    for ((label, pc, g), (head, body)) in expected.iter().zip(&steps) {
        check(head.as_str(), *label, "step label")?;
        let mut got = env_lines(body.iter().copied());
        check(
            got.remove("pc"),
            Some(ty(pc)),
            format!("pc at step {label}"),
        )?;
        check(&got, g, format!("environment after step {label}"))?;
    }
    let (head, body) = &steps[expected.len()];
    check(head.as_str(), "final", "last section")?;
    let got = env_lines(body.iter().copied().filter(|l| !l.starts_with("verdict")));
    check(&got, &expected[7].2, "final environment")?;
    check(
        out.contains("verdict: reject, witness {u, x, z}"),
        true,
        "verdict line",
    )
}

/// Environments after each instruction of the buffer-copy example. The
/// blocks of p, q, x, y are b0..b3, so P, Q, X, Y become b0..b3.
pub fn buffer_copy_expected() -> Vec<(&'static str, Env)> {
    let mut g0 = env(&[
        ("b0", &["b0"]),
        ("b1", &["b1"]),
        ("b2", &["b2"]),
        ("b3", &["b3"]),
        ("xl", &[]),
    ]);
    for r in ["@p", "@q", "%x", "%y", "%1", "%2", "%3", "%4", "%5", "%ret"] {
        g0.insert(r.into(), ty(&[]));
    }
    let g1 = with(&g0, &[("%1", &["b3"])]);
    let g2 = with(&g1, &[("%2", &["b3"])]);
    let g3 = with(&g2, &[("xl", &["b3"]), ("%3", &["b3", "b1"])]);
    let g4 = with(&g3, &[("%4", &["b2"])]);
    let g5 = with(&g4, &[("%5", &["b2"])]);
    let g6 = with(
        &g5,
        &[("xl", &["b3", "b2"]), ("b0", &["b0", "b3", "b1", "b2"])],
    );
    vec![
        ("%1 = load %y", g1),
        ("%2 = op gep @q 0 %1", g2),
        ("%3 = load %2", g3),
        ("%4 = load %x", g4),
        ("%5 = op gep @p 0 %4", g5),
        ("store %3 %5", g6),
    ]
}

/// Runs `check-ir --dump-env` on the buffer-copy example with x and y public.
pub fn buffer_copy() -> Result<(), String> {
    let (code, out, err) = cli(&[
        "check-ir",
        &data("buffer_copy.ir"),
        &data("buffer_copy_public_xy.pol"),
        "--dump-env",
    ]);
    check(err.as_str(), "", "stderr")?;
    check(code, 0, "exit code")?;
    let steps = sections(&out, "-- ");
    let expected = buffer_copy_expected();
    for (label, g) in &expected {
        let body = steps
            .iter()
            .find(|(h, _)| h == label)
            .ok_or_else(|| format!("no step {label}"))?;
        let got = env_lines(body.1.iter().copied().take_while(|l| !l.starts_with("==")));
        check(&got, g, format!("environment after {label}"))?;
    }
    let exit = sections(&out, "== ")
        .into_iter()
        .find(|(h, _)| h == "exit")
        .ok_or("no exit section")?
        .1;
    let got = env_lines(exit.into_iter().filter(|l| !l.starts_with("verdict")));
    check(&got, &expected[5].1, "exit environment")?;
    check(
        out.trim_end().ends_with("verdict: accept"),
        true,
        "verdict line",
    )?;
    for (pol, blk) in [
        ("buffer_copy_secret_x.pol", "b2"),
        ("buffer_copy_secret_y.pol", "b3"),
    ] {
        let (code, out, _) = cli(&["check-ir", &data("buffer_copy.ir"), &data(pol)]);
        check(code, 1, format!("exit code with {pol}"))?;
        check(
            out.contains(&format!("witness {{{blk}}}")),
            true,
            format!("witness with {pol}"),
        )?;
    }
    Ok(())
}

/// The password check is constant time once `good` is an output and not
/// otherwise.
pub fn password() -> Result<(), String> {
    let (code, out, _) = cli(&[
        "check",
        "--ct",
        &data("password.whl"),
        &data("password.pol"),
    ]);
    check(code, 0, "exit code with good as output")?;
    check(out.contains("verdict: accept"), true, "accept line")?;
    let (code, out, _) = cli(&[
        "check",
        "--ct",
        &data("password.whl"),
        &data("password_noout.pol"),
    ]);
    check(code, 1, "exit code without outputs")?;
    check(
        out.contains("verdict: reject, witness {secret}"),
        true,
        "reject line",
    )
}
