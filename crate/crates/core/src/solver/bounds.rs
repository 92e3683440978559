//! Interval tightening for integer unknowns.
//!
//! Derives finite bounds from declared domains, positivity where clauses,
//! single-variable comparisons, and affine equality constraints, so that
//! enumeration has a finite box to walk. Tightening only ever shrinks
//! intervals using sound interval arithmetic, so no solution is removed,
//! and iteration runs to a fixpoint, so the operation is idempotent.

use super::linear::{affine_of, LinForm};
use crate::dsl::{Domain, Item, Program, RelOp};
use crate::expr::{Env, Expr};
use crate::rational::Rational;
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub struct Interval {
    pub lo: Option<Rational>,
    pub hi: Option<Rational>,
}

impl Interval {
    pub fn is_finite(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }
}

/// Returns `p` with tightened finite bounds on integer unknowns where
/// derivable. Unknowns with no usable constraints are left unchanged.
pub fn infer_bounds(p: &Program) -> Program {
    let intervals = infer_intervals(p);
    let mut out = p.clone();
    for item in out.items.iter_mut() {
        if let Item::Var(v) = item {
            if v.domain != Domain::Integer {
                continue;
            }
            if let Some(iv) = intervals.get(&v.name) {
                if let (Some(lo), Some(hi)) = (&iv.lo, &iv.hi) {
                    v.bounds = Some((lo.clone(), hi.clone()));
                }
            }
        }
    }
    out
}

/// Interval per unknown after propagation (integer unknowns get integral
/// endpoints).
pub fn infer_intervals(p: &Program) -> BTreeMap<String, Interval> {
    let consts: Env = p.consts().map(|c| (c.name.clone(), c.value.clone())).collect();
    let domains: BTreeMap<&str, Domain> = p.unknowns().map(|v| (v.name.as_str(), v.domain)).collect();

    let mut iv: BTreeMap<String, Interval> = p
        .unknowns()
        .map(|v| {
            let (lo, hi) = match &v.bounds {
                Some((lo, hi)) => (Some(lo.clone()), Some(hi.clone())),
                None => (None, None),
            };
            (v.name.clone(), Interval { lo, hi })
        })
        .collect();

    // positivity flags give integer unknowns a lower bound of 1
    for v in p.unknowns() {
        if v.domain == Domain::Integer && v.is_positive() {
            let entry = iv.get_mut(&v.name).unwrap();
            let one = Rational::one();
            if entry.lo.as_ref().is_none_or(|lo| lo < &one) {
                entry.lo = Some(one);
            }
        }
    }

    let constraints = p.all_constraints();
    let affine: Vec<LinForm> = constraints
        .iter()
        .filter(|c| c.rel == RelOp::Eq)
        .filter_map(|c| {
            let lhs = affine_of(&c.lhs, p, &consts)?;
            let rhs = affine_of(&c.rhs, p, &consts)?;
            Some(lhs.sub(&rhs))
        })
        .collect();

    for _ in 0..8 {
        let before = iv.clone();

        // single-variable comparisons against constant-valued expressions
        for c in &constraints {
            let (var, rel, bound) = match (&c.lhs, &c.rhs) {
                (Expr::Var(v), rhs) if domains.contains_key(v.as_str()) => {
                    match eval_const(rhs, p, &consts) {
                        Some(b) => (v.clone(), c.rel, b),
                        None => continue,
                    }
                }
                (lhs, Expr::Var(v)) if domains.contains_key(v.as_str()) => {
                    match eval_const(lhs, p, &consts) {
                        Some(b) => (v.clone(), flip(c.rel), b),
                        None => continue,
                    }
                }
                _ => continue,
            };
            let integral = domains[var.as_str()] == Domain::Integer;
            let entry = iv.get_mut(&var).unwrap();
            match rel {
                RelOp::Le => tighten_hi(entry, if integral { bound.floor() } else { bound }),
                RelOp::Lt => tighten_hi(
                    entry,
                    if integral { &bound.ceil() - &Rational::one() } else { bound },
                ),
                RelOp::Ge => tighten_lo(entry, if integral { bound.ceil() } else { bound }),
                RelOp::Gt => tighten_lo(
                    entry,
                    if integral { &bound.floor() + &Rational::one() } else { bound },
                ),
                RelOp::Eq => {
                    tighten_lo(entry, bound.clone());
                    tighten_hi(entry, bound);
                }
                RelOp::Ne => {}
            }
        }

        // affine equalities: solve each for one variable using the interval
        // extremes of the others
        for form in &affine {
            let vars: Vec<&String> = form.coeffs.keys().filter(|v| !form.coeff(v).is_zero()).collect();
            for target in &vars {
                let ct = form.coeff(target);
                // target = (-constant - sum(others)) / ct
                let mut rest_min = Some(form.constant.clone());
                let mut rest_max = Some(form.constant.clone());
                for other in &vars {
                    if other == target {
                        continue;
                    }
                    let co = form.coeff(other);
                    let Some(interval) = iv.get(other.as_str()) else {
                        rest_min = None;
                        rest_max = None;
                        break;
                    };
                    let (term_min, term_max) = if co.is_positive() {
                        (
                            interval.lo.as_ref().map(|lo| &co * lo),
                            interval.hi.as_ref().map(|hi| &co * hi),
                        )
                    } else {
                        (
                            interval.hi.as_ref().map(|hi| &co * hi),
                            interval.lo.as_ref().map(|lo| &co * lo),
                        )
                    };
                    rest_min = rest_min.zip(term_min).map(|(a, b)| &a + &b);
                    rest_max = rest_max.zip(term_max).map(|(a, b)| &a + &b);
                }
                // ct * target = -rest, so bounds of target follow the sign
                let (cand_lo, cand_hi) = if ct.is_positive() {
                    (
                        rest_max.as_ref().map(|r| &(-r.clone()) / &ct),
                        rest_min.as_ref().map(|r| &(-r.clone()) / &ct),
                    )
                } else {
                    (
                        rest_min.as_ref().map(|r| &(-r.clone()) / &ct),
                        rest_max.as_ref().map(|r| &(-r.clone()) / &ct),
                    )
                };
                let integral = domains.get(target.as_str()) == Some(&Domain::Integer);
                if let Some(entry) = iv.get_mut(target.as_str()) {
                    if let Some(lo) = cand_lo {
                        tighten_lo(entry, if integral { lo.ceil() } else { lo });
                    }
                    if let Some(hi) = cand_hi {
                        tighten_hi(entry, if integral { hi.floor() } else { hi });
                    }
                }
            }
        }

        if iv == before {
            break;
        }
    }
    iv
}

fn tighten_lo(iv: &mut Interval, candidate: Rational) {
    if iv.lo.as_ref().is_none_or(|lo| &candidate > lo) {
        iv.lo = Some(candidate);
    }
}

fn tighten_hi(iv: &mut Interval, candidate: Rational) {
    if iv.hi.as_ref().is_none_or(|hi| &candidate < hi) {
        iv.hi = Some(candidate);
    }
}

fn flip(rel: RelOp) -> RelOp {
    match rel {
        RelOp::Lt => RelOp::Gt,
        RelOp::Le => RelOp::Ge,
        RelOp::Gt => RelOp::Lt,
        RelOp::Ge => RelOp::Le,
        other => other,
    }
}

/// Evaluates `e` if it depends only on constants and unknown-free lets.
fn eval_const(e: &Expr, p: &Program, consts: &Env) -> Option<Rational> {
    let mut env = consts.clone();
    for l in p.lets() {
        if l.expr.free_vars().iter().all(|v| env.contains_key(v)) {
            if let Ok(v) = l.expr.eval(&env) {
                env.insert(l.name.clone(), v);
            }
        }
    }
    e.eval(&env).ok()
}
