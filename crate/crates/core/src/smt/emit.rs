//! Program-to-script emission.
//!
//! Every expression is emitted as an exact fraction `term / denominator`
//! with a positive literal denominator; relations and definitions are then
//! cross-multiplied so the script never needs real division. Sorts are
//! assigned conservatively: `Int` only when the expression is provably
//! integer-valued, `Real` otherwise (a `Real` sort never adds constraints,
//! so it is always sound).

use super::{SmtError, SmtScript, Sort, Term};
use crate::dsl::{Constraint, Item, Program, RelOp, ANSWER_NAME};
use crate::expr::Expr;
use num_bigint::BigInt;
use num_integer::Integer;
use crate::rational::Rational;
use num_traits::{One, Signed};
use std::collections::BTreeMap;

/// Emission context: assigned sorts plus names whose exact value is a
/// known constant (const declarations and constant-folding lets), used to
/// resolve divisors.
struct EmitCtx {
    sorts: BTreeMap<String, Sort>,
    const_values: BTreeMap<String, Rational>,
}

/// Folds `e` to a constant when every referenced name has a known value.
fn fold_consts(e: &Expr, values: &BTreeMap<String, Rational>) -> Expr {
    let env: crate::expr::Env = values.clone().into_iter().collect();
    if e.free_vars().iter().all(|v| values.contains_key(v)) {
        if let Ok(value) = e.eval(&env) {
            return Expr::Const(value);
        }
    }
    e.clone()
}

/// An operand that must land as an integer term with no denominator:
/// structural when possible, folded to a literal when the value is a
/// known integer constant, `None` otherwise.
fn int_operand(e: &Expr, ctx: &EmitCtx) -> Option<Frac> {
    if let Ok(frac) = emit_frac(e, ctx) {
        if frac.denom.is_one() && frac.int_term {
            return Some(frac);
        }
    }
    match fold_consts(e, &ctx.const_values) {
        Expr::Const(value) if value.is_integer() => Some(Frac {
            term: Term::Int(value.numer().clone()),
            denom: BigInt::one(),
            int_term: true,
        }),
        _ => None,
    }
}

pub fn emit_smt(p: &Program) -> Result<SmtScript, SmtError> {
    let mut ctx = EmitCtx {
        sorts: BTreeMap::new(),
        const_values: BTreeMap::new(),
    };
    let mut decls: Vec<(String, Sort)> = Vec::new();
    let mut assertions: Vec<Term> = Vec::new();

    let declare = |name: &str, sort: Sort, decls: &mut Vec<(String, Sort)>, ctx: &mut EmitCtx| {
        ctx.sorts.insert(name.to_string(), sort);
        decls.push((name.to_string(), sort));
    };

    for item in &p.items {
        match item {
            Item::Const(c) => {
                let sort = if c.value.is_integer() { Sort::Int } else { Sort::Real };
                declare(&c.name, sort, &mut decls, &mut ctx);
                ctx.const_values.insert(c.name.clone(), c.value.clone());
                assertions.push(definition(&c.name, &Expr::Const(c.value.clone()), &ctx)?);
            }
            Item::Var(v) => {
                let sort = match v.domain {
                    crate::dsl::Domain::Integer => Sort::Int,
                    crate::dsl::Domain::Rational => Sort::Real,
                };
                declare(&v.name, sort, &mut decls, &mut ctx);
                if let Some((lo, hi)) = &v.bounds {
                    assertions.push(relation(
                        &Constraint::new(Expr::var(&v.name), RelOp::Ge, Expr::Const(lo.clone())),
                        &ctx,
                    )?);
                    assertions.push(relation(
                        &Constraint::new(Expr::var(&v.name), RelOp::Le, Expr::Const(hi.clone())),
                        &ctx,
                    )?);
                }
                for w in &v.wheres {
                    assertions.push(relation(w, &ctx)?);
                }
            }
            Item::Let(l) => {
                let sort = type_of(&l.expr, &ctx.sorts);
                declare(&l.name, sort, &mut decls, &mut ctx);
                // a let whose body folds to a constant can serve as a
                // divisor downstream
                if let Expr::Const(value) = fold_consts(&l.expr, &ctx.const_values) {
                    ctx.const_values.insert(l.name.clone(), value);
                }
                assertions.push(definition(&l.name, &l.expr, &ctx)?);
            }
            Item::Constraint(c) => assertions.push(relation(c, &ctx)?),
        }
    }

    let answer_sort = type_of(&p.answer, &ctx.sorts);
    declare(ANSWER_NAME, answer_sort, &mut decls, &mut ctx);
    assertions.push(definition(ANSWER_NAME, &p.answer, &ctx)?);

    let comments = p
        .meta
        .get("smt_comments")
        .map(|c| c.lines().map(str::to_string).collect())
        .unwrap_or_default();

    Ok(SmtScript {
        decls,
        assertions,
        query: ANSWER_NAME.to_string(),
        comments,
    })
}

/// Conservative integer typing; `Real` is always sound.
fn type_of(e: &Expr, sorts: &BTreeMap<String, Sort>) -> Sort {
    let int = |s: Sort| s == Sort::Int;
    let sort = match e {
        Expr::Const(c) => {
            if c.is_integer() {
                Sort::Int
            } else {
                Sort::Real
            }
        }
        Expr::Var(v) => sorts.get(v).copied().unwrap_or(Sort::Real),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
            if int(type_of(a, sorts)) && int(type_of(b, sorts)) {
                Sort::Int
            } else {
                Sort::Real
            }
        }
        Expr::Div(_, _) => Sort::Real,
        Expr::Pow(a, k) => {
            if *k == 0 {
                Sort::Int
            } else {
                type_of(a, sorts)
            }
        }
        Expr::Floor(_) | Expr::Mod(_, _) => Sort::Int,
        Expr::Abs(a) => type_of(a, sorts),
        Expr::Min(a, b) | Expr::Max(a, b) => {
            if int(type_of(a, sorts)) && int(type_of(b, sorts)) {
                Sort::Int
            } else {
                Sort::Real
            }
        }
        Expr::IfPositive(_, t, f) => {
            if int(type_of(t, sorts)) && int(type_of(f, sorts)) {
                Sort::Int
            } else {
                Sort::Real
            }
        }
    };
    sort
}

/// `(= name expr)`, cross-multiplied when the expression carries a
/// denominator: `(= (* d name) n)`.
fn definition(name: &str, e: &Expr, ctx: &EmitCtx) -> Result<Term, SmtError> {
    let frac = emit_frac(e, ctx)?;
    let lhs = scaled(Term::Sym(name.to_string()), &frac.denom);
    Ok(Term::app("=", vec![lhs, frac.term]))
}

fn relation(c: &Constraint, ctx: &EmitCtx) -> Result<Term, SmtError> {
    let l = emit_frac(&c.lhs, ctx)?;
    let r = emit_frac(&c.rhs, ctx)?;
    // common denominator: scale each side by the other's denominator
    let common = l.denom.lcm(&r.denom);
    let lt = scaled(l.term, &(&common / &l.denom));
    let rt = scaled(r.term, &(&common / &r.denom));
    let term = match c.rel {
        RelOp::Eq => Term::app("=", vec![lt, rt]),
        RelOp::Ne => Term::app("not", vec![Term::app("=", vec![lt, rt])]),
        RelOp::Lt => Term::app("<", vec![lt, rt]),
        RelOp::Le => Term::app("<=", vec![lt, rt]),
        RelOp::Gt => Term::app(">", vec![lt, rt]),
        RelOp::Ge => Term::app(">=", vec![lt, rt]),
    };
    Ok(term)
}

/// An expression as `term / denom`, `denom` a positive integer.
struct Frac {
    term: Term,
    denom: BigInt,
    /// Whether `term` is built purely from integer-sorted symbols and
    /// integer literals (needed to lower `floor` to `div`).
    int_term: bool,
}

fn scaled(term: Term, factor: &BigInt) -> Term {
    if factor.is_one() {
        term
    } else {
        mul_term(Term::Int(factor.clone()), term)
    }
}

fn mul_term(a: Term, b: Term) -> Term {
    match (&a, &b) {
        (Term::Int(x), Term::Int(y)) => Term::Int(x * y),
        _ => Term::app("*", vec![a, b]),
    }
}

fn add_term(a: Term, b: Term) -> Term {
    match (&a, &b) {
        (Term::Int(x), Term::Int(y)) => Term::Int(x + y),
        _ => Term::app("+", vec![a, b]),
    }
}

fn sub_term(a: Term, b: Term) -> Term {
    match (&a, &b) {
        (Term::Int(x), Term::Int(y)) => Term::Int(x - y),
        _ => Term::app("-", vec![a, b]),
    }
}

fn emit_frac(e: &Expr, ctx: &EmitCtx) -> Result<Frac, SmtError> {
    let loc = || e.to_string();
    match e {
        Expr::Const(c) => Ok(Frac {
            term: Term::Int(c.numer().clone()),
            denom: c.denom().clone(),
            int_term: true,
        }),
        Expr::Var(v) => Ok(Frac {
            term: Term::Sym(v.clone()),
            denom: BigInt::one(),
            int_term: ctx.sorts.get(v) == Some(&Sort::Int),
        }),
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let fa = emit_frac(a, ctx)?;
            let fb = emit_frac(b, ctx)?;
            let denom = fa.denom.lcm(&fb.denom);
            let ta = scaled(fa.term, &(&denom / &fa.denom));
            let tb = scaled(fb.term, &(&denom / &fb.denom));
            let term = if matches!(e, Expr::Add(_, _)) {
                add_term(ta, tb)
            } else {
                sub_term(ta, tb)
            };
            Ok(Frac {
                term,
                denom,
                int_term: fa.int_term && fb.int_term,
            })
        }
        Expr::Mul(a, b) => {
            let fa = emit_frac(a, ctx)?;
            let fb = emit_frac(b, ctx)?;
            Ok(Frac {
                term: mul_term(fa.term, fb.term),
                denom: fa.denom * fb.denom,
                int_term: fa.int_term && fb.int_term,
            })
        }
        Expr::Div(a, b) => {
            // the divisor must have a known constant value; symbolic
            // divisors that fold over declared constants count
            let divisor = match fold_consts(b, &ctx.const_values) {
                Expr::Const(value) => value,
                _ => {
                    return Err(SmtError::NotExpressible {
                        operator: "division by a non-constant".into(),
                        location: loc(),
                    })
                }
            };
            if divisor.is_zero() {
                return Err(SmtError::NotExpressible {
                    operator: "division by zero".into(),
                    location: loc(),
                });
            }
            let fa = emit_frac(a, ctx)?;
            // (na/da) / (nb/db) = na*db / (da*nb); keep the denominator positive
            let (nb, db) = (divisor.numer().clone(), divisor.denom().clone());
            let (scale, denom) = if nb.is_negative() {
                (-db, fa.denom * nb.abs())
            } else {
                (db, fa.denom * nb)
            };
            let int_term = fa.int_term;
            Ok(Frac {
                term: scaled(fa.term, &scale),
                denom,
                int_term,
            })
        }
        Expr::Pow(a, k) => {
            if *k > 8 {
                return Err(SmtError::NotExpressible {
                    operator: format!("exponent {k}"),
                    location: loc(),
                });
            }
            if *k == 0 {
                return Ok(Frac {
                    term: Term::Int(BigInt::one()),
                    denom: BigInt::one(),
                    int_term: true,
                });
            }
            let fa = emit_frac(a, ctx)?;
            let mut term = fa.term.clone();
            let mut denom = fa.denom.clone();
            for _ in 1..*k {
                term = mul_term(term, fa.term.clone());
                denom *= &fa.denom;
            }
            Ok(Frac {
                term,
                denom,
                int_term: fa.int_term,
            })
        }
        Expr::Floor(a) => {
            let fa = emit_frac(a, ctx)?;
            if fa.denom.is_one() && fa.int_term {
                // floor of an integer value is the value
                return Ok(fa);
            }
            if fa.int_term {
                // floor(n/d) over integers with positive d is Euclidean div
                return Ok(Frac {
                    term: Term::app("div", vec![fa.term, Term::Int(fa.denom)]),
                    denom: BigInt::one(),
                    int_term: true,
                });
            }
            if fa.denom.is_one() {
                return Ok(Frac {
                    term: Term::app("to_int", vec![fa.term]),
                    denom: BigInt::one(),
                    int_term: true,
                });
            }
            // last resort: a constant-valued pocket floors at emit time
            if let Expr::Const(value) = fold_consts(a, &ctx.const_values) {
                return Ok(Frac {
                    term: Term::Int(value.floor().numer().clone()),
                    denom: BigInt::one(),
                    int_term: true,
                });
            }
            Err(SmtError::NotExpressible {
                operator: "floor of a scaled real term".into(),
                location: loc(),
            })
        }
        Expr::Mod(a, m) => {
            let fa = int_operand(a, ctx).ok_or_else(|| SmtError::NotExpressible {
                operator: "mod over non-integer operands".into(),
                location: loc(),
            })?;
            let fm = int_operand(m, ctx).ok_or_else(|| SmtError::NotExpressible {
                operator: "mod over non-integer operands".into(),
                location: loc(),
            })?;
            Ok(Frac {
                term: Term::app("mod", vec![fa.term, fm.term]),
                denom: BigInt::one(),
                int_term: true,
            })
        }
        Expr::Abs(a) => {
            let fa = emit_frac(a, ctx)?;
            // |n/d| = |n|/d: select on the sign of the numerator term
            let term = Term::app(
                "ite",
                vec![
                    Term::app(">", vec![fa.term.clone(), Term::int(0)]),
                    fa.term.clone(),
                    sub_term(Term::int(0), fa.term),
                ],
            );
            Ok(Frac {
                term,
                denom: fa.denom,
                int_term: fa.int_term,
            })
        }
        Expr::Min(a, b) | Expr::Max(a, b) => {
            let fa = emit_frac(a, ctx)?;
            let fb = emit_frac(b, ctx)?;
            let denom = fa.denom.lcm(&fb.denom);
            let ta = scaled(fa.term, &(&denom / &fa.denom));
            let tb = scaled(fb.term, &(&denom / &fb.denom));
            let cmp = if matches!(e, Expr::Min(_, _)) { "<" } else { ">" };
            let term = Term::app(
                "ite",
                vec![
                    Term::app(cmp, vec![ta.clone(), tb.clone()]),
                    ta,
                    tb,
                ],
            );
            Ok(Frac {
                term,
                denom,
                int_term: fa.int_term && fb.int_term,
            })
        }
        Expr::IfPositive(c, t, f) => {
            let fc = emit_frac(c, ctx)?;
            let ft = emit_frac(t, ctx)?;
            let ff = emit_frac(f, ctx)?;
            let denom = ft.denom.lcm(&ff.denom);
            let tt = scaled(ft.term, &(&denom / &ft.denom));
            let tf = scaled(ff.term, &(&denom / &ff.denom));
            // c > 0 iff its numerator term is > 0 (denominators are positive)
            let term = Term::app(
                "ite",
                vec![Term::app(">", vec![fc.term, Term::int(0)]), tt, tf],
            );
            Ok(Frac {
                term,
                denom,
                int_term: ft.int_term && ff.int_term,
            })
        }
    }
}
