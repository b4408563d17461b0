//! Recursive-descent parser for While programs.
//!
//! ```text
//! cmd  := simple (';' simple)* [';']
//! simple := skip | id := e | id[e] := e
//!         | if e then cmd else cmd fi | while e do cmd od
//! ```
//! Binary operators follow C precedence: `|` < `&` < `== !=` < `< <=` <
//! `+ -` < `*`, with prefix `!` binding tightest. `//` starts a line comment.

use num_bigint::BigInt;
use thiserror::Error;

use super::ast::{BinOp, Cmd, Expr};
use crate::secenv::{Policy, LEAK_VAR};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const KEYWORDS: [&str; 8] = ["skip", "if", "then", "else", "fi", "while", "do", "od"];
const SYMBOLS: [&str; 15] = [
    ":=", "==", "!=", "<=", ";", "(", ")", "[", "]", "+", "-", "*", "<", "&", "|",
];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start_col = col;
        if c.is_ascii_digit() {
            let s = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[s..i].iter().collect();
            col += i - s;
            out.push(Token {
                tok: Tok::Int(text.parse().expect("digits")),
                line,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[s..i].iter().collect();
            col += i - s;
            out.push(Token {
                tok: Tok::Ident(text),
                line,
                col: start_col,
            });
            continue;
        }
        if c == '!' && chars.get(i + 1) != Some(&'=') {
            i += 1;
            col += 1;
            out.push(Token {
                tok: Tok::Sym("!"),
                line,
                col: start_col,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push(Token {
                    tok: Tok::Sym(s),
                    line,
                    col: start_col,
                });
            }
            None => {
                return Err(ParseError {
                    line,
                    col,
                    msg: format!("unexpected character `{c}`"),
                });
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    policy: Option<&'a Policy>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_at<T>(&self, t: &Token, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(x) if x == k)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            let t = self.peek().clone();
            self.err_at(&t, format!("expected `{s}`, found {}", describe(&t.tok)))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<(), ParseError> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            let t = self.peek().clone();
            self.err_at(&t, format!("expected `{k}`, found {}", describe(&t.tok)))
        }
    }

    fn ident(&mut self) -> Result<(String, Token), ParseError> {
        let t = self.bump();
        match &t.tok {
            Tok::Ident(x) if !KEYWORDS.contains(&x.as_str()) => {
                if x == LEAK_VAR {
                    return self.err_at(&t, format!("`{LEAK_VAR}` is reserved"));
                }
                Ok((x.clone(), t.clone()))
            }
            other => self.err_at(
                &t,
                format!("expected identifier, found {}", describe(other)),
            ),
        }
    }

    fn check_scalar(&self, name: &str, at: &Token) -> Result<(), ParseError> {
        if let Some(p) = self.policy {
            if p.array_len(name).is_some() {
                return self.err_at(at, format!("array `{name}` used as a scalar"));
            }
            if !p.is_scalar(name) {
                return self.err_at(at, format!("undeclared variable `{name}`"));
            }
        }
        Ok(())
    }

    fn check_array(&self, name: &str, at: &Token) -> Result<(), ParseError> {
        if let Some(p) = self.policy {
            if p.is_scalar(name) {
                return self.err_at(at, format!("scalar `{name}` used as an array"));
            }
            if p.array_len(name).is_none() {
                return self.err_at(at, format!("undeclared array `{name}`"));
            }
        }
        Ok(())
    }

    fn cmd(&mut self) -> Result<Cmd, ParseError> {
        let mut parts = vec![self.simple()?];
        while self.is_sym(";") {
            self.bump();
            if self.at_block_end() {
                break;
            }
            parts.push(self.simple()?);
        }
        Ok(Cmd::seq_all(parts))
    }

    fn at_block_end(&self) -> bool {
        matches!(self.peek().tok, Tok::Eof) || ["else", "fi", "od"].iter().any(|k| self.is_kw(k))
    }

    fn simple(&mut self) -> Result<Cmd, ParseError> {
        if self.is_kw("skip") {
            self.bump();
            return Ok(Cmd::Skip);
        }
        if self.is_kw("if") {
            self.bump();
            let e = self.expr()?;
            self.expect_kw("then")?;
            let a = self.cmd()?;
            self.expect_kw("else")?;
            let b = self.cmd()?;
            self.expect_kw("fi")?;
            return Ok(Cmd::if_(e, a, b));
        }
        if self.is_kw("while") {
            self.bump();
            let e = self.expr()?;
            self.expect_kw("do")?;
            let body = self.cmd()?;
            self.expect_kw("od")?;
            return Ok(Cmd::while_(e, body));
        }
        let (x, at) = self.ident()?;
        if self.is_sym("[") {
            self.check_array(&x, &at)?;
            self.bump();
            let i = self.index_expr()?;
            self.expect_sym("]")?;
            self.expect_sym(":=")?;
            let e = self.expr()?;
            return Ok(Cmd::store(&x, i, e));
        }
        self.check_scalar(&x, &at)?;
        self.expect_sym(":=")?;
        let e = self.expr()?;
        Ok(Cmd::assign(&x, e))
    }

    fn index_expr(&mut self) -> Result<Expr, ParseError> {
        let at = self.peek().clone();
        let e = self.expr()?;
        if e.has_index() {
            return self.err_at(&at, "array index expressions must not read arrays");
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        match &self.peek().tok {
            Tok::Sym("|") => Some(BinOp::Or),
            Tok::Sym("&") => Some(BinOp::And),
            Tok::Sym("==") => Some(BinOp::Eq),
            Tok::Sym("!=") => Some(BinOp::Ne),
            Tok::Sym("<") => Some(BinOp::Lt),
            Tok::Sym("<=") => Some(BinOp::Le),
            Tok::Sym("+") => Some(BinOp::Add),
            Tok::Sym("-") => Some(BinOp::Sub),
            Tok::Sym("*") => Some(BinOp::Mul),
            _ => None,
        }
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let p = op.precedence();
            if p < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(p + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.is_sym("!") {
            self.bump();
            return Ok(Expr::negate(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v.clone()))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(_) => {
                let (x, at) = self.ident()?;
                if self.is_sym("[") {
                    self.check_array(&x, &at)?;
                    self.bump();
                    let i = self.index_expr()?;
                    self.expect_sym("]")?;
                    Ok(Expr::index(&x, i))
                } else {
                    self.check_scalar(&x, &at)?;
                    Ok(Expr::Var(x))
                }
            }
            other => self.err_at(
                &t,
                format!("expected expression, found {}", describe(other)),
            ),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Int(v) => format!("number `{v}`"),
        Tok::Ident(x) => format!("`{x}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".to_string(),
    }
}

fn parse_with(src: &str, policy: Option<&Policy>) -> Result<Cmd, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        policy,
    };
    let c = p.cmd()?;
    let t = p.peek().clone();
    if t.tok != Tok::Eof {
        return p.err_at(&t, format!("unexpected {} after command", describe(&t.tok)));
    }
    Ok(c)
}

/// Syntax-only parse; names are not resolved.
pub fn parse_cmd(src: &str) -> Result<Cmd, ParseError> {
    parse_with(src, None)
}

/// Parses and resolves every name against the policy's declarations.
pub fn parse_program(src: &str, policy: &Policy) -> Result<Cmd, ParseError> {
    parse_with(src, Some(policy))
}

pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        policy: None,
    };
    let e = p.expr()?;
    let t = p.peek().clone();
    if t.tok != Tok::Eof {
        return p.err_at(
            &t,
            format!("unexpected {} after expression", describe(&t.tok)),
        );
    }
    Ok(e)
}
