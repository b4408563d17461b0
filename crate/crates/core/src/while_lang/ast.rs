use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;

use crate::secenv::Policy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::And => "&",
            BinOp::Or => "|",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(BigInt),
    Var(String),
    Index(String, Box<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn int(v: i64) -> Self {
        Expr::Int(BigInt::from(v))
    }

    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_string())
    }

    pub fn index(array: &str, idx: Expr) -> Self {
        Expr::Index(array.to_string(), Box::new(idx))
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    pub fn negate(e: Expr) -> Self {
        Expr::Not(Box::new(e))
    }

    /// Free variables, array names included.
    pub fn fv(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_fv(&mut out);
        out
    }

    pub(crate) fn collect_fv(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Int(_) => {}
            Expr::Var(x) => {
                out.insert(x.clone());
            }
            Expr::Index(a, i) => {
                out.insert(a.clone());
                i.collect_fv(out);
            }
            Expr::Not(e) => e.collect_fv(out),
            Expr::Bin(_, l, r) => {
                l.collect_fv(out);
                r.collect_fv(out);
            }
        }
    }

    /// Index sub-expressions in left-to-right order.
    pub fn index_exprs(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        self.collect_indexes(&mut out);
        out
    }

    fn collect_indexes<'a>(&'a self, out: &mut Vec<&'a Expr>) {
        match self {
            Expr::Int(_) | Expr::Var(_) => {}
            Expr::Index(_, i) => {
                out.push(i);
                i.collect_indexes(out);
            }
            Expr::Not(e) => e.collect_indexes(out),
            Expr::Bin(_, l, r) => {
                l.collect_indexes(out);
                r.collect_indexes(out);
            }
        }
    }

    pub fn has_index(&self) -> bool {
        match self {
            Expr::Int(_) | Expr::Var(_) => false,
            Expr::Index(..) => true,
            Expr::Not(e) => e.has_index(),
            Expr::Bin(_, l, r) => l.has_index() || r.has_index(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, _, _) => op.precedence(),
            Expr::Not(_) => 7,
            _ => 8,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Var(x) => f.write_str(x),
            Expr::Index(a, i) => write!(f, "{a}[{i}]"),
            Expr::Not(e) => {
                if e.precedence() < 7 {
                    write!(f, "!({e})")
                } else {
                    write!(f, "!{e}")
                }
            }
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                if l.precedence() < p {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if r.precedence() <= p {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}

/// A component of a leakage update `xl := xl : t1 : ... : tn`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LeakTerm {
    Branch(Expr),
    Read(Vec<Expr>),
    Write(Expr),
}

impl LeakTerm {
    fn collect_fv(&self, out: &mut BTreeSet<String>) {
        match self {
            LeakTerm::Branch(e) | LeakTerm::Write(e) => e.collect_fv(out),
            LeakTerm::Read(es) => es.iter().for_each(|e| e.collect_fv(out)),
        }
    }
}

impl fmt::Display for LeakTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeakTerm::Branch(e) => write!(f, "b({e})"),
            LeakTerm::Write(e) => write!(f, "w({e})"),
            LeakTerm::Read(es) => {
                let parts: Vec<String> = es.iter().map(ToString::to_string).collect();
                write!(f, "r({})", parts.join(", "))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Cmd {
    Skip,
    Assign(String, Expr),
    Store(String, Expr, Expr),
    Seq(Box<Cmd>, Box<Cmd>),
    If(Expr, Box<Cmd>, Box<Cmd>),
    While(Expr, Box<Cmd>),
    /// Appends the listed observations to `xl`. Only produced by
    /// instrumentation.
    Leak(Vec<LeakTerm>),
}

impl Cmd {
    pub fn assign(x: &str, e: Expr) -> Self {
        Cmd::Assign(x.to_string(), e)
    }

    pub fn store(a: &str, i: Expr, e: Expr) -> Self {
        Cmd::Store(a.to_string(), i, e)
    }

    pub fn seq(a: Cmd, b: Cmd) -> Self {
        Cmd::Seq(Box::new(a), Box::new(b))
    }

    /// Right-nested sequence of the given commands; `skip` when empty.
    pub fn seq_all(cmds: impl IntoIterator<Item = Cmd>) -> Self {
        let mut v: Vec<Cmd> = cmds.into_iter().collect();
        let mut acc = match v.pop() {
            Some(c) => c,
            None => return Cmd::Skip,
        };
        while let Some(c) = v.pop() {
            acc = Cmd::seq(c, acc);
        }
        acc
    }

    pub fn if_(e: Expr, a: Cmd, b: Cmd) -> Self {
        Cmd::If(e, Box::new(a), Box::new(b))
    }

    pub fn while_(e: Expr, body: Cmd) -> Self {
        Cmd::While(e, Box::new(body))
    }

    /// Every variable assigned or stored to, `xl` included for leak updates.
    pub fn assigned(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_assigned(&mut out);
        out
    }

    fn collect_assigned(&self, out: &mut BTreeSet<String>) {
        match self {
            Cmd::Skip => {}
            Cmd::Assign(x, _) | Cmd::Store(x, _, _) => {
                out.insert(x.clone());
            }
            Cmd::Leak(_) => {
                out.insert(crate::secenv::LEAK_VAR.to_string());
            }
            Cmd::Seq(a, b) | Cmd::If(_, a, b) => {
                a.collect_assigned(out);
                b.collect_assigned(out);
            }
            Cmd::While(_, b) => b.collect_assigned(out),
        }
    }

    /// Outputs assigned somewhere in the command.
    pub fn def_outputs(&self, policy: &Policy) -> BTreeSet<String> {
        self.assigned()
            .into_iter()
            .filter(|x| policy.is_output(x))
            .collect()
    }

    /// Every variable mentioned, read or written.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = self.assigned();
        self.collect_read(&mut out);
        out
    }

    fn collect_read(&self, out: &mut BTreeSet<String>) {
        match self {
            Cmd::Skip => {}
            Cmd::Assign(_, e) => e.collect_fv(out),
            Cmd::Store(_, i, e) => {
                i.collect_fv(out);
                e.collect_fv(out);
            }
            Cmd::Leak(ts) => ts.iter().for_each(|t| t.collect_fv(out)),
            Cmd::Seq(a, b) => {
                a.collect_read(out);
                b.collect_read(out);
            }
            Cmd::If(e, a, b) => {
                e.collect_fv(out);
                a.collect_read(out);
                b.collect_read(out);
            }
            Cmd::While(e, b) => {
                e.collect_fv(out);
                b.collect_read(out);
            }
        }
    }

    /// Nesting depth: primitive commands have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Cmd::Skip | Cmd::Assign(..) | Cmd::Store(..) | Cmd::Leak(_) => 1,
            Cmd::Seq(a, b) => a.depth().max(b.depth()),
            Cmd::If(_, a, b) => 1 + a.depth().max(b.depth()),
            Cmd::While(_, b) => 1 + b.depth(),
        }
    }

    pub fn contains_leak(&self) -> bool {
        match self {
            Cmd::Leak(_) => true,
            Cmd::Skip | Cmd::Assign(..) | Cmd::Store(..) => false,
            Cmd::Seq(a, b) | Cmd::If(_, a, b) => a.contains_leak() || b.contains_leak(),
            Cmd::While(_, b) => b.contains_leak(),
        }
    }

    fn fmt_indented(&self, f: &mut fmt::Formatter<'_>, ind: usize) -> fmt::Result {
        let pad = "  ".repeat(ind);
        match self {
            Cmd::Skip => write!(f, "{pad}skip"),
            Cmd::Assign(x, e) => write!(f, "{pad}{x} := {e}"),
            Cmd::Store(a, i, e) => write!(f, "{pad}{a}[{i}] := {e}"),
            Cmd::Leak(ts) => {
                write!(f, "{pad}{0} := {0}", crate::secenv::LEAK_VAR)?;
                for t in ts {
                    write!(f, " : {t}")?;
                }
                Ok(())
            }
            Cmd::Seq(a, b) => {
                a.fmt_indented(f, ind)?;
                writeln!(f, ";")?;
                b.fmt_indented(f, ind)
            }
            Cmd::If(e, a, b) => {
                writeln!(f, "{pad}if {e} then")?;
                a.fmt_indented(f, ind + 1)?;
                writeln!(f)?;
                writeln!(f, "{pad}else")?;
                b.fmt_indented(f, ind + 1)?;
                writeln!(f)?;
                write!(f, "{pad}fi")
            }
            Cmd::While(e, b) => {
                writeln!(f, "{pad}while {e} do")?;
                b.fmt_indented(f, ind + 1)?;
                writeln!(f)?;
                write!(f, "{pad}od")
            }
        }
    }
}

impl fmt::Display for Cmd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_indented(f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_printing_respects_precedence() {
        let e = Expr::bin(
            BinOp::And,
            Expr::var("g"),
            Expr::bin(BinOp::Eq, Expr::index("s", Expr::var("i")), Expr::int(1)),
        );
        assert_eq!(e.to_string(), "g & s[i] == 1");
        let e = Expr::bin(
            BinOp::Sub,
            Expr::var("a"),
            Expr::bin(BinOp::Sub, Expr::var("b"), Expr::var("c")),
        );
        assert_eq!(e.to_string(), "a - (b - c)");
        assert_eq!(
            Expr::negate(Expr::bin(BinOp::Or, Expr::var("a"), Expr::var("b"))).to_string(),
            "!(a | b)"
        );
    }

    #[test]
    fn index_expressions_are_left_to_right() {
        let e = Expr::bin(
            BinOp::Add,
            Expr::index("a", Expr::var("i")),
            Expr::index("b", Expr::int(1)),
        );
        let idx: Vec<String> = e.index_exprs().iter().map(|e| e.to_string()).collect();
        assert_eq!(idx, vec!["i", "1"]);
        assert_eq!(e.fv().into_iter().collect::<Vec<_>>(), vec!["a", "b", "i"]);
    }
}
