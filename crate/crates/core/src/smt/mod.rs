//! SMT-LIB subset interchange.
//!
//! Scripts are a flat list of `declare-fun`s over `Int`/`Real`, `assert`ed
//! terms over `{= < <= > >= + - * div mod to_int ite and or not}`, exactly
//! one `(check-sat)` and exactly one `(get-value (v))` naming one declared
//! variable. Comments round-trip as program metadata and never affect
//! semantics.
//!
//! Emission clears fractional coefficients by cross-multiplication, so
//! `let half = total / 2` becomes `(assert (= (* 2 half) total))` and the
//! script stays within integer arithmetic; `floor` over integer terms
//! lowers to `div`. Parsing maps `to_int` to floor, `div`/`mod` to the
//! Euclidean integer operations, and `ite` to arithmetic selection, and
//! recovers straight-line definitions from assertions of the shape
//! `(= v term)` or `(= (* k v) term)` whenever `term` only reads
//! already-defined names.

mod emit;
mod parse;

pub use emit::emit_smt;
pub use parse::parse_smt;

use crate::dsl::Program;
use crate::rational::Rational;
use crate::solver::{solve, SolveBudget, Verdict};
use num_bigint::BigInt;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sort {
    Int,
    Real,
}

impl Sort {
    pub fn name(self) -> &'static str {
        match self {
            Sort::Int => "Int",
            Sort::Real => "Real",
        }
    }
}

/// An s-expression term of the subset.
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Int(BigInt),
    /// Decimal literal, stored exactly.
    Dec(Rational),
    Sym(String),
    App(String, Vec<Term>),
}

impl Term {
    pub fn app(op: &str, args: Vec<Term>) -> Term {
        Term::App(op.to_string(), args)
    }

    pub fn int(n: i64) -> Term {
        Term::Int(BigInt::from(n))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Int(n) => {
                if n.sign() == num_bigint::Sign::Minus {
                    write!(f, "(- {})", n.magnitude())
                } else {
                    write!(f, "{n}")
                }
            }
            Term::Dec(r) => match r.to_decimal_string() {
                Some(s) => write!(f, "{s}"),
                None => write!(f, "(- {} {})", r.numer(), r.denom()),
            },
            Term::Sym(s) => write!(f, "{s}"),
            Term::App(op, args) => {
                write!(f, "({op}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmtScript {
    pub decls: Vec<(String, Sort)>,
    pub assertions: Vec<Term>,
    /// The single variable named in `(get-value ...)`.
    pub query: String,
    /// Comment lines, without the leading `;`.
    pub comments: Vec<String>,
}

impl SmtScript {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("; ");
            out.push_str(c);
            out.push('\n');
        }
        for (name, sort) in &self.decls {
            out.push_str(&format!("(declare-fun {name} () {})\n", sort.name()));
        }
        for a in &self.assertions {
            out.push_str(&format!("(assert {a})\n"));
        }
        out.push_str("(check-sat)\n");
        out.push_str(&format!("(get-value ({}))\n", self.query));
        out
    }
}

impl fmt::Display for SmtScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmtError {
    #[error("smt syntax error: {0}")]
    Syntax(String),
    #[error("unsupported command `{0}`")]
    UnsupportedCommand(String),
    #[error("more than one variable queried")]
    MultipleQueries,
    #[error("script must end with (check-sat) and one (get-value (v))")]
    MissingQuery,
    #[error("undeclared symbol `{0}`")]
    UndeclaredSymbol(String),
    #[error("`{operator}` is not expressible in the SMT subset (at {location})")]
    NotExpressible { operator: String, location: String },
}

/// True when emit -> print -> parse -> solve matches the direct solve
/// verdict and answer.
pub fn smt_roundtrip_check(p: &Program) -> Result<bool, SmtError> {
    let script = emit_smt(p)?;
    let reparsed = parse_smt(&script.to_text())?;
    let budget = SolveBudget::default();
    let a = solve(p, budget);
    let b = solve(&reparsed, budget);
    Ok(same_outcome(&a.verdict, &b.verdict))
}

/// Verdict equivalence on kind and answer value; witnesses may differ
/// because the reparsed program introduces derived variables.
pub fn same_outcome(a: &Verdict, b: &Verdict) -> bool {
    match (a, b) {
        (Verdict::Unique { answer: x, .. }, Verdict::Unique { answer: y, .. }) => x == y,
        (Verdict::MultipleAnswers { .. }, Verdict::MultipleAnswers { .. }) => true,
        (Verdict::NoSolution, Verdict::NoSolution) => true,
        (Verdict::Unsupported(_), Verdict::Unsupported(_)) => true,
        (Verdict::BudgetExceeded { .. }, Verdict::BudgetExceeded { .. }) => true,
        _ => false,
    }
}
