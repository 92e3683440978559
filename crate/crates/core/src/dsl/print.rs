//! Canonical printer. `parse_program(print_program(p))` is structurally
//! equal to `p`, and printing is byte-deterministic.

use super::{Constraint, Domain, Item, Program};
use crate::expr::Expr;
use crate::rational::Rational;
use std::fmt::Write;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "problem \"{}\" {{", p.id);
    for (k, v) in &p.meta {
        let v = v.replace('\n', " ");
        if v.is_empty() {
            let _ = writeln!(out, "  // @{k}");
        } else {
            let _ = writeln!(out, "  // @{k} {v}");
        }
    }
    for item in &p.items {
        match item {
            Item::Const(c) => {
                let _ = write!(out, "  const {}: {}", c.name, domain_token(c.domain));
                if let Some(unit) = &c.unit {
                    let _ = write!(out, " unit \"{unit}\"");
                }
                let _ = writeln!(out, " = {};", literal(&c.value));
            }
            Item::Let(l) => {
                let _ = writeln!(out, "  let {} = {};", l.name, expr_str(&l.expr));
            }
            Item::Var(v) => {
                let _ = write!(out, "  var {}: {}", v.name, domain_token(v.domain));
                if let Some((lo, hi)) = &v.bounds {
                    let _ = write!(out, " in [{}, {}]", literal(lo), literal(hi));
                }
                if !v.wheres.is_empty() {
                    let clauses: Vec<String> = v.wheres.iter().map(constraint_str).collect();
                    let _ = write!(out, " where {}", clauses.join(", "));
                }
                let _ = writeln!(out, ";");
            }
            Item::Constraint(c) => {
                let _ = writeln!(out, "  constraint {};", constraint_str(c));
            }
        }
    }
    let _ = writeln!(out, "  answer = {};", expr_str(&p.answer));
    out.push_str("}\n");
    out
}

fn domain_token(d: Domain) -> &'static str {
    match d {
        Domain::Integer => "int",
        Domain::Rational => "rat",
    }
}

fn literal(r: &Rational) -> String {
    r.to_string()
}

pub fn constraint_str(c: &Constraint) -> String {
    format!("{} {} {}", expr_str(&c.lhs), c.rel.token(), expr_str(&c.rhs))
}

pub fn expr_str(e: &Expr) -> String {
    render(e, 0)
}

/// Operator precedence for parenthesization. Negative or fractional
/// constants rank lowest so they are parenthesized in operand position and
/// re-read exactly (`x / (3/2)` rather than `x / 3/2`).
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) => {
            if c.is_negative() || !c.is_integer() {
                0
            } else {
                4
            }
        }
        Expr::Var(_) => 4,
        Expr::Floor(_) | Expr::Mod(_, _) | Expr::Abs(_) | Expr::Min(_, _) | Expr::Max(_, _)
        | Expr::IfPositive(_, _, _) => 4,
        Expr::Pow(_, _) => 3,
        Expr::Mul(_, _) | Expr::Div(_, _) => 2,
        Expr::Add(_, _) | Expr::Sub(_, _) => 1,
    }
}

fn render(e: &Expr, required: u8) -> String {
    let s = match e {
        Expr::Const(c) => c.to_string(),
        Expr::Var(v) => v.clone(),
        Expr::Add(a, b) => format!("{} + {}", render(a, 1), render(b, 2)),
        Expr::Sub(a, b) => format!("{} - {}", render(a, 1), render(b, 2)),
        Expr::Mul(a, b) => format!("{} * {}", render(a, 2), render(b, 3)),
        Expr::Div(a, b) => format!("{} / {}", render(a, 2), render(b, 3)),
        Expr::Pow(a, k) => format!("{} ^ {}", render(a, 4), k),
        Expr::Floor(a) => format!("floor({})", render(a, 0)),
        Expr::Mod(a, b) => format!("mod({}, {})", render(a, 0), render(b, 0)),
        Expr::Abs(a) => format!("abs({})", render(a, 0)),
        Expr::Min(a, b) => format!("min({}, {})", render(a, 0), render(b, 0)),
        Expr::Max(a, b) => format!("max({}, {})", render(a, 0), render(b, 0)),
        Expr::IfPositive(c, t, f) => format!(
            "ifpos({}, {}, {})",
            render(c, 0),
            render(t, 0),
            render(f, 0)
        ),
    };
    if prec(e) < required {
        format!("({s})")
    } else {
        s
    }
}
