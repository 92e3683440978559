//! Exact answer computation and uniqueness verification.
//!
//! The solver runs a strategy cascade: straight-line evaluation for
//! programs with no unknowns, exact Gaussian elimination when every
//! equality constraint is affine, bounded exhaustive enumeration for
//! integer unknowns with finite (declared or inferred) domains, and exact
//! quadratic root extraction for a single unknown under one degree-2
//! equality. Every failure mode is a verdict, never a panic, and the
//! result is deterministic for a fixed program and budget.
//!
//! Uniqueness is defined on the answer value: distinct witnesses that
//! agree on the answer still count as unique.

mod bounds;
mod linear;

pub use bounds::{infer_bounds, infer_intervals, Interval};
pub use linear::{affine_of, eliminate, poly_of, Elimination, LinForm, Poly};

use crate::dsl::{size_ratio, Domain, Program, RelOp};
use crate::expr::{Env, EvalError};
use crate::rational::Rational;
use num_bigint::BigInt;
use std::collections::BTreeMap;

/// Witness: one exact assignment of the unknowns.
pub type Assignment = BTreeMap<String, Rational>;

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Unique {
        answer: Rational,
        witness: Assignment,
    },
    MultipleAnswers {
        first: (Rational, Assignment),
        second: (Rational, Assignment),
    },
    NoSolution,
    Unsupported(String),
    BudgetExceeded {
        tried: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    StraightLine,
    AffineElimination,
    Enumeration,
    QuadraticRoots,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveStats {
    pub assignments_enumerated: u64,
    pub strategy: Strategy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome {
    pub verdict: Verdict,
    pub stats: SolveStats,
}

impl SolveOutcome {
    fn new(verdict: Verdict, strategy: Strategy, enumerated: u64) -> Self {
        SolveOutcome {
            verdict,
            stats: SolveStats {
                assignments_enumerated: enumerated,
                strategy,
            },
        }
    }

    pub fn answer(&self) -> Option<&Rational> {
        match &self.verdict {
            Verdict::Unique { answer, .. } => Some(answer),
            _ => None,
        }
    }

    pub fn is_unique(&self) -> bool {
        matches!(self.verdict, Verdict::Unique { .. })
    }

    /// "Runs without errors": no strategy gap and no budget blowout.
    pub fn executes(&self) -> bool {
        !matches!(
            self.verdict,
            Verdict::Unsupported(_) | Verdict::BudgetExceeded { .. }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveBudget {
    pub max_assignments: u64,
    pub max_linear_dim: usize,
}

impl Default for SolveBudget {
    fn default() -> Self {
        SolveBudget {
            max_assignments: 1_000_000,
            max_linear_dim: 32,
        }
    }
}

pub fn solve(p: &Program, budget: SolveBudget) -> SolveOutcome {
    if !p.is_valid() {
        return SolveOutcome::new(
            Verdict::Unsupported("program fails structural validation".into()),
            Strategy::None,
            0,
        );
    }
    let consts: Env = p.consts().map(|c| (c.name.clone(), c.value.clone())).collect();

    if p.is_straight_line() {
        return solve_straight_line(p, &consts);
    }

    let unknowns: Vec<String> = p.unknowns().map(|v| v.name.clone()).collect();
    let constraints = p.all_constraints();

    // (b) all equality constraints affine: exact elimination
    if unknowns.len() <= budget.max_linear_dim {
        let eq_forms: Option<Vec<LinForm>> = constraints
            .iter()
            .filter(|c| c.rel == RelOp::Eq)
            .map(|c| {
                let lhs = affine_of(&c.lhs, p, &consts)?;
                let rhs = affine_of(&c.rhs, p, &consts)?;
                Some(lhs.sub(&rhs))
            })
            .collect();
        if let Some(forms) = eq_forms {
            match eliminate(&unknowns, &forms) {
                Elimination::Unique(solution) => {
                    return solve_at_candidate(p, &consts, solution, Strategy::AffineElimination);
                }
                Elimination::Inconsistent => {
                    return SolveOutcome::new(Verdict::NoSolution, Strategy::AffineElimination, 0);
                }
                Elimination::Underdetermined => {}
            }
        }
    }

    // (c) integer unknowns over finite inferred boxes: enumeration
    let tightened = infer_bounds(p);
    let enumerable = tightened
        .unknowns()
        .all(|v| v.domain == Domain::Integer && v.bounds.as_ref().is_some_and(|(lo, hi)| lo <= hi));
    if enumerable {
        return enumerate(&tightened, &consts, budget);
    }
    if tightened
        .unknowns()
        .any(|v| v.bounds.as_ref().is_some_and(|(lo, hi)| lo > hi))
    {
        return SolveOutcome::new(Verdict::NoSolution, Strategy::Enumeration, 0);
    }

    // (d) one unknown constrained by a single degree-2 equality
    if unknowns.len() == 1 {
        if let Some(outcome) = quadratic_path(p, &consts, &unknowns[0]) {
            return outcome;
        }
    }

    SolveOutcome::new(
        Verdict::Unsupported(
            "no strategy applies: constraints are neither affine nor enumerable nor a single quadratic"
                .into(),
        ),
        Strategy::None,
        0,
    )
}

/// Evaluates lets in declaration order on top of `base`, returning the
/// extended environment.
fn extend_with_lets(p: &Program, base: &Env) -> Result<Env, EvalError> {
    let mut env = base.clone();
    for l in p.lets() {
        let v = l.expr.eval(&env)?;
        env.insert(l.name.clone(), v);
    }
    Ok(env)
}

fn solve_straight_line(p: &Program, consts: &Env) -> SolveOutcome {
    let strategy = Strategy::StraightLine;
    let env = match extend_with_lets(p, consts) {
        Ok(env) => env,
        Err(e) => {
            return SolveOutcome::new(
                Verdict::Unsupported(format!("evaluation error: {e}")),
                strategy,
                0,
            )
        }
    };
    for c in p.all_constraints() {
        match (c.lhs.eval(&env), c.rhs.eval(&env)) {
            (Ok(l), Ok(r)) => {
                if !c.rel.holds(&l, &r) {
                    return SolveOutcome::new(Verdict::NoSolution, strategy, 0);
                }
            }
            (Err(e), _) | (_, Err(e)) => {
                return SolveOutcome::new(
                    Verdict::Unsupported(format!("evaluation error: {e}")),
                    strategy,
                    0,
                )
            }
        }
    }
    match p.answer.eval(&env) {
        Ok(answer) => SolveOutcome::new(
            Verdict::Unique {
                answer,
                witness: Assignment::new(),
            },
            strategy,
            0,
        ),
        Err(e) => SolveOutcome::new(
            Verdict::Unsupported(format!("evaluation error: {e}")),
            strategy,
            0,
        ),
    }
}

/// Checks a fully determined candidate assignment against domains, bounds,
/// and every constraint, then evaluates the answer.
fn solve_at_candidate(
    p: &Program,
    consts: &Env,
    candidate: Assignment,
    strategy: Strategy,
) -> SolveOutcome {
    match check_candidate(p, consts, &candidate) {
        Ok(Some(answer)) => SolveOutcome::new(
            Verdict::Unique {
                answer,
                witness: candidate,
            },
            strategy,
            0,
        ),
        Ok(None) => SolveOutcome::new(Verdict::NoSolution, strategy, 0),
        Err(e) => SolveOutcome::new(
            Verdict::Unsupported(format!("evaluation error at witness: {e}")),
            strategy,
            0,
        ),
    }
}

/// `Ok(Some(answer))` when the assignment satisfies domains and all
/// constraints; `Ok(None)` when it is excluded; `Err` when evaluation of a
/// satisfying assignment's answer fails.
fn check_candidate(
    p: &Program,
    consts: &Env,
    candidate: &Assignment,
) -> Result<Option<Rational>, EvalError> {
    for v in p.unknowns() {
        let value = &candidate[&v.name];
        if v.domain == Domain::Integer && !value.is_integer() {
            return Ok(None);
        }
        if let Some((lo, hi)) = &v.bounds {
            if value < lo || value > hi {
                return Ok(None);
            }
        }
    }
    let mut base = consts.clone();
    base.extend(candidate.clone());
    let env = match extend_with_lets(p, &base) {
        Ok(env) => env,
        // a let that fails to evaluate at this assignment excludes it
        Err(_) => return Ok(None),
    };
    for c in p.all_constraints() {
        match (c.lhs.eval(&env), c.rhs.eval(&env)) {
            (Ok(l), Ok(r)) => {
                if !c.rel.holds(&l, &r) {
                    return Ok(None);
                }
            }
            _ => return Ok(None),
        }
    }
    p.answer.eval(&env).map(Some)
}

fn enumerate(p: &Program, consts: &Env, budget: SolveBudget) -> SolveOutcome {
    let strategy = Strategy::Enumeration;
    let vars: Vec<(String, BigInt, BigInt)> = p
        .unknowns()
        .map(|v| {
            let (lo, hi) = v.bounds.as_ref().expect("enumerable bounds");
            (v.name.clone(), lo.ceil().numer().clone(), hi.floor().numer().clone())
        })
        .collect();

    let mut total = BigInt::from(1u32);
    for (_, lo, hi) in &vars {
        if hi < lo {
            return SolveOutcome::new(Verdict::NoSolution, strategy, 0);
        }
        total *= hi - lo + 1;
    }
    if total > BigInt::from(budget.max_assignments) {
        return SolveOutcome::new(Verdict::BudgetExceeded { tried: 0 }, strategy, 0);
    }

    let mut odometer: Vec<BigInt> = vars.iter().map(|(_, lo, _)| lo.clone()).collect();
    let mut tried: u64 = 0;
    let mut first: Option<(Rational, Assignment)> = None;
    loop {
        tried += 1;
        let candidate: Assignment = vars
            .iter()
            .zip(&odometer)
            .map(|((name, _, _), v)| (name.clone(), Rational::from(v.clone())))
            .collect();
        match check_candidate(p, consts, &candidate) {
            Ok(Some(answer)) => match &first {
                None => first = Some((answer, candidate)),
                Some((prev, _)) if prev != &answer => {
                    return SolveOutcome::new(
                        Verdict::MultipleAnswers {
                            first: first.unwrap(),
                            second: (answer, candidate),
                        },
                        strategy,
                        tried,
                    );
                }
                Some(_) => {}
            },
            Ok(None) => {}
            Err(e) => {
                return SolveOutcome::new(
                    Verdict::Unsupported(format!("evaluation error at witness: {e}")),
                    strategy,
                    tried,
                );
            }
        }
        // advance: last variable fastest, ascending lexicographic order
        let mut place = vars.len();
        loop {
            if place == 0 {
                let verdict = match first {
                    Some((answer, witness)) => Verdict::Unique { answer, witness },
                    None => Verdict::NoSolution,
                };
                return SolveOutcome::new(verdict, strategy, tried);
            }
            place -= 1;
            odometer[place] += 1;
            if odometer[place] <= vars[place].2 {
                break;
            }
            odometer[place] = vars[place].1.clone();
        }
    }
}

/// Exact rational square root, if one exists.
fn rational_sqrt(r: &Rational) -> Option<Rational> {
    if r.is_negative() {
        return None;
    }
    if r.is_zero() {
        return Some(Rational::zero());
    }
    let sqrt_exact = |n: &BigInt| -> Option<BigInt> {
        let root = n.sqrt();
        (&root * &root == *n).then_some(root)
    };
    let n = sqrt_exact(r.numer())?;
    let d = sqrt_exact(r.denom())?;
    Rational::new(n, d)
}

fn quadratic_path(p: &Program, consts: &Env, var: &str) -> Option<SolveOutcome> {
    let strategy = Strategy::QuadraticRoots;
    let constraints = p.all_constraints();
    let equalities: Vec<_> = constraints.iter().filter(|c| c.rel == RelOp::Eq).collect();
    if equalities.len() != 1 {
        return None;
    }
    let eq = equalities[0];
    let lhs = poly_of(&eq.lhs, var, p, consts)?;
    let rhs = poly_of(&eq.rhs, var, p, consts)?;
    let mut poly = lhs;
    for (k, c) in &rhs.coeffs {
        let e = poly.coeffs.entry(*k).or_insert_with(Rational::zero);
        *e = &*e - c;
    }
    if poly.degree() != 2 {
        return None;
    }
    let a = poly.coeff(2);
    let b = poly.coeff(1);
    let c = poly.coeff(0);
    let disc = &(&b * &b) - &(&(&Rational::from_int(4) * &a) * &c);
    if disc.is_negative() {
        return Some(SolveOutcome::new(Verdict::NoSolution, strategy, 0));
    }
    // irrational roots are discarded: answers must be exact rationals
    let Some(sqrt) = rational_sqrt(&disc) else {
        return Some(SolveOutcome::new(Verdict::NoSolution, strategy, 0));
    };
    let two_a = &Rational::from_int(2) * &a;
    let mut roots = vec![&(&(-b.clone()) - &sqrt) / &two_a];
    if !sqrt.is_zero() {
        roots.push(&(&(-b) + &sqrt) / &two_a);
    }
    roots.sort();

    let mut tried = 0u64;
    let mut first: Option<(Rational, Assignment)> = None;
    for root in roots {
        tried += 1;
        let mut candidate = Assignment::new();
        candidate.insert(var.to_string(), root);
        match check_candidate(p, consts, &candidate) {
            Ok(Some(answer)) => match &first {
                None => first = Some((answer, candidate)),
                Some((prev, _)) if prev != &answer => {
                    return Some(SolveOutcome::new(
                        Verdict::MultipleAnswers {
                            first: first.unwrap(),
                            second: (answer, candidate),
                        },
                        strategy,
                        tried,
                    ));
                }
                Some(_) => {}
            },
            Ok(None) => {}
            Err(e) => {
                return Some(SolveOutcome::new(
                    Verdict::Unsupported(format!("evaluation error at witness: {e}")),
                    strategy,
                    tried,
                ));
            }
        }
    }
    Some(match first {
        Some((answer, witness)) => {
            SolveOutcome::new(Verdict::Unique { answer, witness }, strategy, tried)
        }
        None => SolveOutcome::new(Verdict::NoSolution, strategy, tried),
    })
}

/// The three programmatic quality checks applied to a mutated program:
/// unique answer, executes, and size within 1.5x of the original.
#[derive(Clone, Debug, PartialEq)]
pub struct GuardrailReport {
    pub unique_answer: bool,
    pub executes: bool,
    pub size_ok: bool,
    pub size_ratio: Rational,
    pub answer: Option<Rational>,
}

impl GuardrailReport {
    pub fn passes(&self) -> bool {
        self.unique_answer && self.executes && self.size_ok
    }
}

pub fn check_guardrails(original: &Program, mutated: &Program, budget: SolveBudget) -> GuardrailReport {
    let ratio = size_ratio(original, mutated);
    let size_ok = ratio <= Rational::from_frac(3, 2);
    let outcome = solve(mutated, budget);
    GuardrailReport {
        unique_answer: outcome.is_unique(),
        executes: outcome.executes(),
        size_ok,
        size_ratio: ratio,
        answer: outcome.answer().cloned(),
    }
}
