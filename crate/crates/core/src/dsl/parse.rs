//! Recursive-descent parser for the problem language.
//!
//! Diagnostics carry 1-based line and column positions. Parsing also
//! enforces declaration-before-use in textual order, name uniqueness, and
//! the reserved `answer` slot, so a successful parse yields a structurally
//! valid program.

use super::{ConstDecl, Constraint, Domain, Item, LetDecl, Program, RelOp, VarDecl, ANSWER_NAME};
use crate::expr::Expr;
use crate::rational::Rational;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("{line}:{col}: expected {expected}, found {found}")]
    Syntax {
        line: u32,
        col: u32,
        expected: String,
        found: String,
    },
    #[error("{line}:{col}: duplicate name `{name}`")]
    DuplicateName { name: String, line: u32, col: u32 },
    #[error("{line}:{col}: `{name}` used before declaration")]
    UseBeforeDeclare { name: String, line: u32, col: u32 },
    #[error("program has no answer expression")]
    MissingAnswer,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(String),
    Decimal(String),
    Str(String),
    Punct(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(s) | Tok::Decimal(s) => format!("`{s}`"),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
    /// `// @key value` annotation comments, collected for program metadata.
    meta: BTreeMap<String, String>,
}

struct Spanned {
    tok: Tok,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
            meta: BTreeMap::new(),
        }
    }

    fn bump(&mut self) -> u8 {
        let b = self.src[self.pos];
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        b
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'/') if self.peek2() == Some(b'/') => {
                    self.bump();
                    self.bump();
                    let mut comment = String::new();
                    while let Some(b) = self.peek() {
                        if b == b'\n' {
                            break;
                        }
                        comment.push(self.bump() as char);
                    }
                    let comment = comment.trim();
                    if let Some(rest) = comment.strip_prefix('@') {
                        let mut parts = rest.splitn(2, ' ');
                        if let Some(key) = parts.next() {
                            if !key.is_empty() {
                                let value = parts.next().unwrap_or("").to_string();
                                self.meta.insert(key.to_string(), value);
                            }
                        }
                    }
                }
                _ => break,
            }
        }
    }

    fn next_token(&mut self) -> Result<Spanned, DslError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let Some(b) = self.peek() else {
            return Ok(Spanned { tok: Tok::Eof, line, col });
        };
        let tok = match b {
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut s = String::new();
                while let Some(b) = self.peek() {
                    if b.is_ascii_alphanumeric() || b == b'_' {
                        s.push(self.bump() as char);
                    } else {
                        break;
                    }
                }
                Tok::Ident(s)
            }
            b'0'..=b'9' => {
                let mut s = String::new();
                while let Some(b) = self.peek() {
                    if b.is_ascii_digit() {
                        s.push(self.bump() as char);
                    } else {
                        break;
                    }
                }
                if self.peek() == Some(b'.') && self.peek2().is_some_and(|b| b.is_ascii_digit()) {
                    s.push(self.bump() as char);
                    while let Some(b) = self.peek() {
                        if b.is_ascii_digit() {
                            s.push(self.bump() as char);
                        } else {
                            break;
                        }
                    }
                    Tok::Decimal(s)
                } else {
                    Tok::Int(s)
                }
            }
            b'"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.peek() {
                        None | Some(b'\n') => {
                            return Err(DslError::Syntax {
                                line,
                                col,
                                expected: "closing quote".into(),
                                found: "end of line".into(),
                            })
                        }
                        Some(b'"') => {
                            self.bump();
                            break;
                        }
                        Some(_) => s.push(self.bump() as char),
                    }
                }
                Tok::Str(s)
            }
            _ => {
                let two = |a: u8, b: u8| -> bool {
                    self.src.get(self.pos) == Some(&a) && self.src.get(self.pos + 1) == Some(&b)
                };
                let punct = if two(b'=', b'=') {
                    "=="
                } else if two(b'!', b'=') {
                    "!="
                } else if two(b'<', b'=') {
                    "<="
                } else if two(b'>', b'=') {
                    ">="
                } else {
                    match b {
                        b'{' => "{",
                        b'}' => "}",
                        b'[' => "[",
                        b']' => "]",
                        b'(' => "(",
                        b')' => ")",
                        b',' => ",",
                        b';' => ";",
                        b':' => ":",
                        b'=' => "=",
                        b'<' => "<",
                        b'>' => ">",
                        b'+' => "+",
                        b'-' => "-",
                        b'*' => "*",
                        b'/' => "/",
                        b'^' => "^",
                        other => {
                            return Err(DslError::Syntax {
                                line,
                                col,
                                expected: "a token".into(),
                                found: format!("`{}`", other as char),
                            })
                        }
                    }
                };
                for _ in 0..punct.len() {
                    self.bump();
                }
                Tok::Punct(punct)
            }
        };
        Ok(Spanned { tok, line, col })
    }
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    declared: BTreeSet<String>,
    meta: BTreeMap<String, String>,
}

pub fn parse_program(text: &str) -> Result<Program, DslError> {
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    loop {
        let t = lexer.next_token()?;
        let eof = t.tok == Tok::Eof;
        tokens.push(t);
        if eof {
            break;
        }
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        declared: BTreeSet::new(),
        meta: lexer.meta,
    };
    parser.program()
}

impl Parser {
    fn cur(&self) -> &Spanned {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> &Spanned {
        let t = &self.tokens[self.pos];
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: impl Into<String>) -> DslError {
        let t = self.cur();
        DslError::Syntax {
            line: t.line,
            col: t.col,
            expected: expected.into(),
            found: t.tok.describe(),
        }
    }

    fn expect_punct(&mut self, p: &'static str) -> Result<(), DslError> {
        if self.cur().tok == Tok::Punct(p) {
            self.advance();
            Ok(())
        } else {
            Err(self.err(format!("`{p}`")))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), DslError> {
        if matches!(&self.cur().tok, Tok::Ident(s) if s == kw) {
            self.advance();
            Ok(())
        } else {
            Err(self.err(format!("`{kw}`")))
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.cur().tok, Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self) -> Result<(String, u32, u32), DslError> {
        let (line, col) = (self.cur().line, self.cur().col);
        match &self.cur().tok {
            Tok::Ident(s) if s == ANSWER_NAME => Err(DslError::DuplicateName {
                name: s.clone(),
                line,
                col,
            }),
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.advance();
                Ok((s, line, col))
            }
            _ => Err(self.err("an identifier")),
        }
    }

    fn string(&mut self) -> Result<String, DslError> {
        match &self.cur().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(self.err("a string")),
        }
    }

    fn declare(&mut self, name: String, line: u32, col: u32) -> Result<String, DslError> {
        if name == ANSWER_NAME || self.declared.contains(&name) {
            return Err(DslError::DuplicateName { name, line, col });
        }
        self.declared.insert(name.clone());
        Ok(name)
    }

    fn check_declared(&self, e: &Expr, line: u32, col: u32) -> Result<(), DslError> {
        for v in e.free_vars() {
            if !self.declared.contains(&v) {
                return Err(DslError::UseBeforeDeclare { name: v, line, col });
            }
        }
        Ok(())
    }

    fn program(&mut self) -> Result<Program, DslError> {
        self.expect_keyword("problem")?;
        let id = self.string()?;
        self.expect_punct("{")?;
        let mut items = Vec::new();
        let mut answer = None;
        loop {
            if self.cur().tok == Tok::Punct("}") {
                self.advance();
                break;
            }
            if self.cur().tok == Tok::Eof {
                return Err(self.err("`}`"));
            }
            if self.at_keyword("const") {
                items.push(Item::Const(self.const_decl()?));
            } else if self.at_keyword("let") {
                items.push(Item::Let(self.let_decl()?));
            } else if self.at_keyword("var") {
                items.push(Item::Var(self.var_decl()?));
            } else if self.at_keyword("constraint") {
                self.advance();
                let (line, col) = (self.cur().line, self.cur().col);
                let c = self.relexpr()?;
                self.check_declared(&c.lhs, line, col)?;
                self.check_declared(&c.rhs, line, col)?;
                self.expect_punct(";")?;
                items.push(Item::Constraint(c));
            } else if self.at_keyword(ANSWER_NAME) {
                self.advance();
                self.expect_punct("=")?;
                let (line, col) = (self.cur().line, self.cur().col);
                let e = self.expr()?;
                self.check_declared(&e, line, col)?;
                self.expect_punct(";")?;
                answer = Some(e);
            } else {
                return Err(self.err("`const`, `let`, `var`, `constraint`, or `answer`"));
            }
        }
        if self.cur().tok != Tok::Eof {
            return Err(self.err("end of input"));
        }
        let answer = answer.ok_or(DslError::MissingAnswer)?;
        let mut p = Program::new(id, items, answer);
        p.meta = std::mem::take(&mut self.meta);
        Ok(p)
    }

    fn domain(&mut self) -> Result<Domain, DslError> {
        if self.at_keyword("int") {
            self.advance();
            Ok(Domain::Integer)
        } else if self.at_keyword("rat") {
            self.advance();
            Ok(Domain::Rational)
        } else {
            Err(self.err("`int` or `rat`"))
        }
    }

    fn const_decl(&mut self) -> Result<ConstDecl, DslError> {
        self.expect_keyword("const")?;
        let (name, line, col) = self.ident()?;
        self.expect_punct(":")?;
        let domain = self.domain()?;
        let unit = if self.at_keyword("unit") {
            self.advance();
            Some(self.string()?)
        } else {
            None
        };
        self.expect_punct("=")?;
        let value = self.literal()?;
        self.expect_punct(";")?;
        let name = self.declare(name, line, col)?;
        Ok(ConstDecl { name, value, unit, domain })
    }

    fn let_decl(&mut self) -> Result<LetDecl, DslError> {
        self.expect_keyword("let")?;
        let (name, line, col) = self.ident()?;
        self.expect_punct("=")?;
        let (eline, ecol) = (self.cur().line, self.cur().col);
        let expr = self.expr()?;
        self.check_declared(&expr, eline, ecol)?;
        self.expect_punct(";")?;
        let name = self.declare(name, line, col)?;
        Ok(LetDecl { name, expr })
    }

    fn var_decl(&mut self) -> Result<VarDecl, DslError> {
        self.expect_keyword("var")?;
        let (name, line, col) = self.ident()?;
        self.expect_punct(":")?;
        let domain = self.domain()?;
        let bounds = if self.at_keyword("in") {
            self.advance();
            self.expect_punct("[")?;
            let lo = self.literal()?;
            self.expect_punct(",")?;
            let hi = self.literal()?;
            self.expect_punct("]")?;
            Some((lo, hi))
        } else {
            None
        };
        // the variable is visible inside its own where clauses
        let name = self.declare(name, line, col)?;
        let mut wheres = Vec::new();
        if self.at_keyword("where") {
            self.advance();
            loop {
                let (wline, wcol) = (self.cur().line, self.cur().col);
                let c = self.relexpr()?;
                self.check_declared(&c.lhs, wline, wcol)?;
                self.check_declared(&c.rhs, wline, wcol)?;
                wheres.push(c);
                if self.cur().tok == Tok::Punct(",") {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect_punct(";")?;
        Ok(VarDecl { name, domain, bounds, wheres })
    }

    fn relexpr(&mut self) -> Result<Constraint, DslError> {
        let lhs = self.expr()?;
        let rel = match &self.cur().tok {
            Tok::Punct("==") => RelOp::Eq,
            Tok::Punct("!=") => RelOp::Ne,
            Tok::Punct("<") => RelOp::Lt,
            Tok::Punct("<=") => RelOp::Le,
            Tok::Punct(">") => RelOp::Gt,
            Tok::Punct(">=") => RelOp::Ge,
            _ => return Err(self.err("a relation operator")),
        };
        self.advance();
        let rhs = self.expr()?;
        Ok(Constraint { rel, lhs, rhs })
    }

    /// Signed rational literal: integer, fraction `a/b`, or exact decimal.
    fn literal(&mut self) -> Result<Rational, DslError> {
        let negative = if self.cur().tok == Tok::Punct("-") {
            self.advance();
            true
        } else {
            false
        };
        let value = match &self.cur().tok {
            Tok::Int(s) => {
                let n = s.clone();
                self.advance();
                if self.cur().tok == Tok::Punct("/") {
                    self.advance();
                    match &self.cur().tok {
                        Tok::Int(d) => {
                            let d = d.clone();
                            self.advance();
                            Rational::parse(&format!("{n}/{d}"))
                                .ok_or_else(|| self.err("a nonzero denominator"))?
                        }
                        _ => return Err(self.err("an integer denominator")),
                    }
                } else {
                    Rational::parse(&n).ok_or_else(|| self.err("an integer"))?
                }
            }
            Tok::Decimal(s) => {
                let s = s.clone();
                self.advance();
                Rational::parse(&s).ok_or_else(|| self.err("a decimal"))?
            }
            _ => return Err(self.err("a numeric literal")),
        };
        Ok(if negative { -value } else { value })
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            match &self.cur().tok {
                Tok::Punct("+") => {
                    self.advance();
                    lhs = Expr::add(lhs, self.term()?);
                }
                Tok::Punct("-") => {
                    self.advance();
                    lhs = Expr::sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.factor()?;
        loop {
            match &self.cur().tok {
                Tok::Punct("*") => {
                    self.advance();
                    lhs = Expr::mul(lhs, self.factor()?);
                }
                Tok::Punct("/") => {
                    let (line, col) = (self.cur().line, self.cur().col);
                    self.advance();
                    let rhs = self.factor()?;
                    // a division of two literal constants is a fraction
                    // literal; division by a literal zero is rejected here
                    // so trees never carry one
                    lhs = match (&lhs, &rhs) {
                        (Expr::Const(a), Expr::Const(b)) => {
                            if b.is_zero() {
                                return Err(DslError::Syntax {
                                    line,
                                    col,
                                    expected: "a nonzero divisor".into(),
                                    found: "`0`".into(),
                                });
                            }
                            Expr::Const(a / b)
                        }
                        (_, Expr::Const(b)) if b.is_zero() => {
                            return Err(DslError::Syntax {
                                line,
                                col,
                                expected: "a nonzero divisor".into(),
                                found: "`0`".into(),
                            });
                        }
                        _ => Expr::div(lhs, rhs),
                    };
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, DslError> {
        let base = self.atom()?;
        if self.cur().tok == Tok::Punct("^") {
            self.advance();
            match &self.cur().tok {
                Tok::Int(s) => {
                    let k: u32 = s.parse().map_err(|_| self.err("a small exponent"))?;
                    self.advance();
                    Ok(Expr::Pow(Box::new(base), k))
                }
                _ => Err(self.err("a nonnegative integer exponent")),
            }
        } else {
            Ok(base)
        }
    }

    fn call_args(&mut self, n: usize) -> Result<Vec<Expr>, DslError> {
        self.expect_punct("(")?;
        let mut args = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                self.expect_punct(",")?;
            }
            args.push(self.expr()?);
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    fn atom(&mut self) -> Result<Expr, DslError> {
        match &self.cur().tok.clone() {
            Tok::Punct("-") => {
                self.advance();
                let inner = self.atom()?;
                Ok(match inner {
                    Expr::Const(c) => Expr::Const(-c),
                    other => Expr::sub(Expr::int(0), other),
                })
            }
            Tok::Punct("(") => {
                self.advance();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Int(_) | Tok::Decimal(_) => Ok(Expr::Const(self.number_token()?)),
            Tok::Ident(s) => {
                let name = s.clone();
                match name.as_str() {
                    "floor" => {
                        self.advance();
                        let mut a = self.call_args(1)?;
                        Ok(Expr::floor(a.remove(0)))
                    }
                    "abs" => {
                        self.advance();
                        let mut a = self.call_args(1)?;
                        Ok(Expr::Abs(Box::new(a.remove(0))))
                    }
                    "mod" => {
                        self.advance();
                        let mut a = self.call_args(2)?;
                        Ok(Expr::Mod(Box::new(a.remove(0)), Box::new(a.remove(0))))
                    }
                    "min" => {
                        self.advance();
                        let mut a = self.call_args(2)?;
                        Ok(Expr::Min(Box::new(a.remove(0)), Box::new(a.remove(0))))
                    }
                    "max" => {
                        self.advance();
                        let mut a = self.call_args(2)?;
                        Ok(Expr::Max(Box::new(a.remove(0)), Box::new(a.remove(0))))
                    }
                    "ifpos" => {
                        self.advance();
                        let mut a = self.call_args(3)?;
                        Ok(Expr::IfPositive(
                            Box::new(a.remove(0)),
                            Box::new(a.remove(0)),
                            Box::new(a.remove(0)),
                        ))
                    }
                    _ if is_keyword(&name) => Err(self.err("an expression")),
                    _ => {
                        self.advance();
                        Ok(Expr::Var(name))
                    }
                }
            }
            _ => Err(self.err("an expression")),
        }
    }

    /// An unsigned numeric token as a constant expression.
    fn number_token(&mut self) -> Result<Rational, DslError> {
        match &self.cur().tok {
            Tok::Int(s) | Tok::Decimal(s) => {
                let s = s.clone();
                self.advance();
                Rational::parse(&s).ok_or_else(|| self.err("a number"))
            }
            _ => Err(self.err("a number")),
        }
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(
        s,
        "problem"
            | "const"
            | "let"
            | "var"
            | "constraint"
            | "answer"
            | "int"
            | "rat"
            | "unit"
            | "in"
            | "where"
            | "floor"
            | "mod"
            | "abs"
            | "min"
            | "max"
            | "ifpos"
    )
}
