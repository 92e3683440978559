//! Structure-aware program mutation.
//!
//! Each operator makes one kind of edit: scaling a constant by a pool
//! fraction, turning an integer coefficient fractional, splitting a
//! derivation into a chained intermediate step, coupling a quantity to a
//! fresh unknown through a product constraint, wrapping a division in a
//! floor, or perturbing one constant while re-deriving another. A weighted
//! policy samples and chains operators deterministically from its seed;
//! results that fail the quality guardrails retry on alternative sites and
//! finally fall back to a baseline single-operator mutation.

use crate::clients::{ChatClient, ChatRequest, ClientError};
use crate::dsl::{
    parse_program, print_program, Constraint, Domain, Item, Program, RelOp, VarDecl,
};
use crate::expr::Expr;
use crate::rational::Rational;
use crate::rng::{mix_seed, Rng};
use crate::solver::{check_guardrails, solve, GuardrailReport, SolveBudget};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Fraction pool for scaling and rationalizing edits.
pub fn fraction_pool() -> [Rational; 3] {
    [
        Rational::from_frac(3, 7),
        Rational::from_frac(5, 8),
        Rational::from_frac(1, 8),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MutationKind {
    ScaleConstant,
    RationalizeCoefficient,
    ChainIntermediate,
    CoupleVariables,
    InjectFloor,
    PerturbAndCompensate,
    ThemeOnly,
}

impl MutationKind {
    pub const ALL: [MutationKind; 7] = [
        MutationKind::ScaleConstant,
        MutationKind::RationalizeCoefficient,
        MutationKind::ChainIntermediate,
        MutationKind::CoupleVariables,
        MutationKind::InjectFloor,
        MutationKind::PerturbAndCompensate,
        MutationKind::ThemeOnly,
    ];

    /// Local edits change numbers or labels without new structure.
    pub fn is_local(self) -> bool {
        matches!(
            self,
            MutationKind::ScaleConstant
                | MutationKind::RationalizeCoefficient
                | MutationKind::ThemeOnly
        )
    }
}

impl fmt::Display for MutationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MutationKind::ScaleConstant => "scale_constant",
            MutationKind::RationalizeCoefficient => "rationalize_coefficient",
            MutationKind::ChainIntermediate => "chain_intermediate",
            MutationKind::CoupleVariables => "couple_variables",
            MutationKind::InjectFloor => "inject_floor",
            MutationKind::PerturbAndCompensate => "perturb_and_compensate",
            MutationKind::ThemeOnly => "theme_only",
        };
        f.write_str(name)
    }
}

/// A concrete operator instance with its parameters fixed.
#[derive(Clone, Debug, PartialEq)]
pub enum MutationOp {
    ScaleConstant { factor: Rational },
    RationalizeCoefficient { factor: Rational },
    ChainIntermediate,
    CoupleVariables,
    InjectFloor,
    PerturbAndCompensate { delta: Rational },
    ThemeOnly,
}

impl MutationOp {
    pub fn kind(&self) -> MutationKind {
        match self {
            MutationOp::ScaleConstant { .. } => MutationKind::ScaleConstant,
            MutationOp::RationalizeCoefficient { .. } => MutationKind::RationalizeCoefficient,
            MutationOp::ChainIntermediate => MutationKind::ChainIntermediate,
            MutationOp::CoupleVariables => MutationKind::CoupleVariables,
            MutationOp::InjectFloor => MutationKind::InjectFloor,
            MutationOp::PerturbAndCompensate { .. } => MutationKind::PerturbAndCompensate,
            MutationOp::ThemeOnly => MutationKind::ThemeOnly,
        }
    }

    /// Draws parameters for `kind` from the rng.
    pub fn sample(kind: MutationKind, rng: &mut Rng) -> MutationOp {
        match kind {
            MutationKind::ScaleConstant => MutationOp::ScaleConstant {
                factor: rng.pick(&fraction_pool()).clone(),
            },
            MutationKind::RationalizeCoefficient => MutationOp::RationalizeCoefficient {
                factor: rng.pick(&fraction_pool()).clone(),
            },
            MutationKind::ChainIntermediate => MutationOp::ChainIntermediate,
            MutationKind::CoupleVariables => MutationOp::CoupleVariables,
            MutationKind::InjectFloor => MutationOp::InjectFloor,
            MutationKind::PerturbAndCompensate => MutationOp::PerturbAndCompensate {
                delta: Rational::from_int(rng.range_i64(1, 3)),
            },
            MutationKind::ThemeOnly => MutationOp::ThemeOnly,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("{kind} not applicable: {reason}")]
pub struct NotApplicable {
    pub kind: MutationKind,
    pub reason: String,
}

fn not_applicable(kind: MutationKind, reason: &str) -> NotApplicable {
    NotApplicable {
        kind,
        reason: reason.to_string(),
    }
}

/// A weighted operator genome: the offline stand-in for a learnable
/// generation prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutationPolicy {
    /// Nonnegative weights summing to one, keyed in `MutationKind::ALL`
    /// order.
    pub weights: BTreeMap<MutationKind, Rational>,
    /// Operators applied per generation, in `1..=4`.
    pub chain_depth: u32,
    pub seed: u64,
}

impl MutationPolicy {
    pub fn uniform(seed: u64) -> Self {
        let n = MutationKind::ALL.len() as i64;
        let weights = MutationKind::ALL
            .iter()
            .map(|k| (*k, Rational::from_frac(1, n)))
            .collect();
        MutationPolicy {
            weights,
            chain_depth: 1,
            seed,
        }
    }

    /// All weight on a single kind.
    pub fn single(kind: MutationKind, seed: u64) -> Self {
        let weights = MutationKind::ALL
            .iter()
            .map(|k| {
                (
                    *k,
                    if *k == kind {
                        Rational::one()
                    } else {
                        Rational::zero()
                    },
                )
            })
            .collect();
        MutationPolicy {
            weights,
            chain_depth: 1,
            seed,
        }
    }

    pub fn normalize(&mut self) {
        let total: Rational = self
            .weights
            .values()
            .fold(Rational::zero(), |acc, w| &acc + w);
        if total.is_zero() {
            *self = MutationPolicy::uniform(self.seed);
            return;
        }
        for w in self.weights.values_mut() {
            *w = &*w / &total;
        }
    }

    /// Stable fingerprint over weights, depth, and seed; used to derive
    /// per-policy sub-seeds so evaluations are reproducible.
    pub fn fingerprint(&self) -> u64 {
        let mut text = format!("d{};s{}", self.chain_depth, self.seed);
        for (k, w) in &self.weights {
            text.push_str(&format!(";{k}={w}"));
        }
        crate::rng::seed_from(&[&text])
    }

    fn sample_kind(&self, rng: &mut Rng) -> MutationKind {
        let draw = rng.next_u64();
        // exact comparison: draw/2^64 against the cumulative weights
        let t = Rational::new(
            num_bigint::BigInt::from(draw),
            num_bigint::BigInt::from(1u128 << 64),
        )
        .expect("nonzero");
        let mut cum = Rational::zero();
        for kind in MutationKind::ALL {
            if let Some(w) = self.weights.get(&kind) {
                cum = &cum + w;
                if t < cum {
                    return kind;
                }
            }
        }
        MutationKind::ThemeOnly
    }
}

/// Outcome of one generation step: the mutated program, the operator
/// trace, its guardrail report, and whether the baseline fallback fired.
#[derive(Clone, Debug, PartialEq)]
pub struct MutationResult {
    pub program: Program,
    pub trace: Vec<MutationKind>,
    pub guardrails: GuardrailReport,
    pub fallback: bool,
}

impl MutationResult {
    pub fn passed(&self) -> bool {
        self.guardrails.passes()
    }
}

// ---------------------------------------------------------------------------
// expression site helpers

/// Preorder collection of mutable expression slots: lets first, answer last.
enum ExprSite {
    Let(usize),
    Answer,
}

fn expr_sites(p: &Program) -> Vec<ExprSite> {
    let mut sites: Vec<ExprSite> = p
        .items
        .iter()
        .enumerate()
        .filter_map(|(i, item)| matches!(item, Item::Let(_)).then_some(ExprSite::Let(i)))
        .collect();
    sites.push(ExprSite::Answer);
    sites
}

fn site_expr<'a>(p: &'a Program, site: &ExprSite) -> &'a Expr {
    match site {
        ExprSite::Let(i) => match &p.items[*i] {
            Item::Let(l) => &l.expr,
            _ => unreachable!(),
        },
        ExprSite::Answer => &p.answer,
    }
}

fn set_site_expr(p: &mut Program, site: &ExprSite, expr: Expr) {
    match site {
        ExprSite::Let(i) => match &mut p.items[*i] {
            Item::Let(l) => l.expr = expr,
            _ => unreachable!(),
        },
        ExprSite::Answer => p.answer = expr,
    }
}

/// Rebuilds `e`, replacing the `idx`-th node (preorder) satisfying `pred`
/// using `build`. Decrements `idx` past each match.
fn replace_nth<F, P>(e: &Expr, idx: &mut i64, pred: &P, build: &F) -> Expr
where
    F: Fn(&Expr) -> Expr,
    P: Fn(&Expr) -> bool,
{
    if pred(e) {
        if *idx == 0 {
            *idx -= 1;
            return build(e);
        }
        *idx -= 1;
    }
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Add(a, b) => Expr::add(replace_nth(a, idx, pred, build), replace_nth(b, idx, pred, build)),
        Expr::Sub(a, b) => Expr::sub(replace_nth(a, idx, pred, build), replace_nth(b, idx, pred, build)),
        Expr::Mul(a, b) => Expr::mul(replace_nth(a, idx, pred, build), replace_nth(b, idx, pred, build)),
        Expr::Div(a, b) => Expr::div(replace_nth(a, idx, pred, build), replace_nth(b, idx, pred, build)),
        Expr::Pow(a, k) => Expr::Pow(Box::new(replace_nth(a, idx, pred, build)), *k),
        Expr::Floor(a) => Expr::floor(replace_nth(a, idx, pred, build)),
        Expr::Mod(a, b) => Expr::Mod(
            Box::new(replace_nth(a, idx, pred, build)),
            Box::new(replace_nth(b, idx, pred, build)),
        ),
        Expr::Abs(a) => Expr::Abs(Box::new(replace_nth(a, idx, pred, build))),
        Expr::Min(a, b) => Expr::Min(
            Box::new(replace_nth(a, idx, pred, build)),
            Box::new(replace_nth(b, idx, pred, build)),
        ),
        Expr::Max(a, b) => Expr::Max(
            Box::new(replace_nth(a, idx, pred, build)),
            Box::new(replace_nth(b, idx, pred, build)),
        ),
        Expr::IfPositive(c, t, f) => Expr::IfPositive(
            Box::new(replace_nth(c, idx, pred, build)),
            Box::new(replace_nth(t, idx, pred, build)),
            Box::new(replace_nth(f, idx, pred, build)),
        ),
    }
}

fn count_matching<P: Fn(&Expr) -> bool>(e: &Expr, pred: &P) -> usize {
    let mut n = usize::from(pred(e));
    match e {
        Expr::Const(_) | Expr::Var(_) => {}
        Expr::Add(a, b)
        | Expr::Sub(a, b)
        | Expr::Mul(a, b)
        | Expr::Div(a, b)
        | Expr::Mod(a, b)
        | Expr::Min(a, b)
        | Expr::Max(a, b) => n += count_matching(a, pred) + count_matching(b, pred),
        Expr::Pow(a, _) | Expr::Floor(a) | Expr::Abs(a) => n += count_matching(a, pred),
        Expr::IfPositive(c, t, f) => {
            n += count_matching(c, pred) + count_matching(t, pred) + count_matching(f, pred)
        }
    }
    n
}

/// The `idx`-th matching subtree in preorder.
fn nth_matching<'a, P: Fn(&Expr) -> bool>(e: &'a Expr, idx: &mut i64, pred: &P) -> Option<&'a Expr> {
    if pred(e) {
        if *idx == 0 {
            *idx -= 1;
            return Some(e);
        }
        *idx -= 1;
    }
    match e {
        Expr::Const(_) | Expr::Var(_) => None,
        Expr::Add(a, b)
        | Expr::Sub(a, b)
        | Expr::Mul(a, b)
        | Expr::Div(a, b)
        | Expr::Mod(a, b)
        | Expr::Min(a, b)
        | Expr::Max(a, b) => nth_matching(a, idx, pred).or_else(|| nth_matching(b, idx, pred)),
        Expr::Pow(a, _) | Expr::Floor(a) | Expr::Abs(a) => nth_matching(a, idx, pred),
        Expr::IfPositive(c, t, f) => nth_matching(c, idx, pred)
            .or_else(|| nth_matching(t, idx, pred))
            .or_else(|| nth_matching(f, idx, pred)),
    }
}

fn fresh_name(p: &Program, base: &str) -> String {
    let declared = p.declared_names();
    for i in 1.. {
        let candidate = format!("{base}_{i}");
        if !declared.contains(candidate.as_str()) {
            return candidate;
        }
    }
    unreachable!()
}

// ---------------------------------------------------------------------------
// operators

/// Applies one operator at an rng-chosen eligible site. The result is
/// structurally valid; guardrails are the caller's concern except for
/// `CoupleVariables`, which searches its parameters until they pass.
pub fn apply_op(p: &Program, op: &MutationOp, rng: &mut Rng) -> Result<Program, NotApplicable> {
    match op {
        MutationOp::ScaleConstant { factor } => scale_constant(p, factor, rng),
        MutationOp::RationalizeCoefficient { factor } => rationalize_coefficient(p, factor, rng),
        MutationOp::ChainIntermediate => chain_intermediate(p, rng),
        MutationOp::CoupleVariables => couple_variables(p, rng),
        MutationOp::InjectFloor => inject_floor(p, rng),
        MutationOp::PerturbAndCompensate { delta } => perturb_and_compensate(p, delta, rng),
        MutationOp::ThemeOnly => {
            let mut q = p.clone();
            q.meta
                .insert("theme_variant".into(), rng.next_u64().to_string());
            Ok(q)
        }
    }
}

fn scale_constant(p: &Program, factor: &Rational, rng: &mut Rng) -> Result<Program, NotApplicable> {
    let kind = MutationKind::ScaleConstant;
    let const_indices: Vec<usize> = p
        .items
        .iter()
        .enumerate()
        .filter_map(|(i, item)| matches!(item, Item::Const(_)).then_some(i))
        .collect();
    if const_indices.is_empty() {
        return Err(not_applicable(kind, "program declares no constants"));
    }
    let pick = const_indices[rng.below(const_indices.len())];
    let mut q = p.clone();
    if let Item::Const(c) = &mut q.items[pick] {
        c.value = &c.value * factor;
        if !c.value.is_integer() {
            c.domain = Domain::Rational;
        }
    }
    Ok(q)
}

fn rationalize_coefficient(
    p: &Program,
    factor: &Rational,
    rng: &mut Rng,
) -> Result<Program, NotApplicable> {
    let kind = MutationKind::RationalizeCoefficient;
    let is_scalable =
        |e: &Expr| matches!(e, Expr::Const(c) if c.is_integer() && c >= &Rational::from_int(2));
    let sites = expr_sites(p);
    let counts: Vec<usize> = sites
        .iter()
        .map(|s| count_matching(site_expr(p, s), &is_scalable))
        .collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(not_applicable(kind, "no integer coefficient to rationalize"));
    }
    let mut target = rng.below(total) as i64;
    let mut q = p.clone();
    for (site, count) in sites.iter().zip(&counts) {
        if target < *count as i64 {
            let new_expr = replace_nth(site_expr(p, site), &mut target, &is_scalable, &|e| {
                match e {
                    Expr::Const(c) => Expr::Const(c * factor),
                    _ => unreachable!(),
                }
            });
            set_site_expr(&mut q, site, new_expr);
            return Ok(q);
        }
        target -= *count as i64;
    }
    Err(not_applicable(kind, "site selection failed"))
}

fn chain_intermediate(p: &Program, rng: &mut Rng) -> Result<Program, NotApplicable> {
    let kind = MutationKind::ChainIntermediate;
    // extract a proper subexpression into its own step. A split only
    // lengthens the derivation chain when the extracted piece references
    // an existing derived quantity or at least some variable, so those
    // candidate classes are preferred, in that order.
    let let_names: Vec<String> = p.lets().map(|l| l.name.clone()).collect();
    let references_let = move |x: &Expr| {
        let vars = x.free_vars();
        let_names.iter().any(|n| vars.contains(n))
    };
    let references_any_var = |x: &Expr| !x.free_vars().is_empty();
    let classes: [&dyn Fn(&Expr) -> bool; 3] =
        [&references_let, &references_any_var, &|_| true];

    let sites = expr_sites(p);
    for class in classes {
        let counts: Vec<usize> = sites
            .iter()
            .map(|s| {
                let e = site_expr(p, s);
                count_matching(e, &|x| x.node_count() < e.node_count() && class(x))
            })
            .collect();
        let total: usize = counts.iter().sum();
        if total == 0 {
            continue;
        }
        let mut target = rng.below(total) as i64;
        for (site, count) in sites.iter().zip(&counts) {
            if target >= *count as i64 {
                target -= *count as i64;
                continue;
            }
            let whole = site_expr(p, site);
            let pred = |x: &Expr| x.node_count() < whole.node_count() && class(x);
            let mut probe = target;
            let extracted = nth_matching(whole, &mut probe, &pred)
                .expect("candidate exists")
                .clone();
            let name = fresh_name(p, "step");
            let mut pick = target;
            let replaced = replace_nth(whole, &mut pick, &pred, &|_| Expr::var(name.clone()));
            let mut q = p.clone();
            set_site_expr(&mut q, site, replaced);
            let new_let = Item::Let(crate::dsl::LetDecl {
                name: name.clone(),
                expr: extracted,
            });
            match site {
                ExprSite::Let(i) => q.items.insert(*i, new_let),
                ExprSite::Answer => q.items.push(new_let),
            }
            return Ok(q);
        }
    }
    Err(not_applicable(kind, "no splittable derivation"))
}

fn inject_floor(p: &Program, rng: &mut Rng) -> Result<Program, NotApplicable> {
    let kind = MutationKind::InjectFloor;
    let is_div = |e: &Expr| matches!(e, Expr::Div(_, _));
    let sites = expr_sites(p);
    let counts: Vec<usize> = sites
        .iter()
        .map(|s| count_matching(site_expr(p, s), &is_div))
        .collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(not_applicable(kind, "no division to wrap"));
    }
    let mut target = rng.below(total) as i64;
    let mut q = p.clone();
    for (site, count) in sites.iter().zip(&counts) {
        if target < *count as i64 {
            let new_expr = replace_nth(site_expr(p, site), &mut target, &is_div, &|e| {
                Expr::floor(e.clone())
            });
            set_site_expr(&mut q, site, new_expr);
            return Ok(q);
        }
        target -= *count as i64;
    }
    Err(not_applicable(kind, "site selection failed"))
}

fn couple_variables(p: &Program, rng: &mut Rng) -> Result<Program, NotApplicable> {
    let kind = MutationKind::CoupleVariables;
    let budget = SolveBudget::default();
    let mut candidates_tried = 0usize;
    const SEARCH_CAP: usize = 200;

    // form 1: split an integer constant v into a product constraint
    // u * (v - u) = P with bounds that pin the larger factor
    let const_sites: Vec<(usize, i64)> = p
        .items
        .iter()
        .enumerate()
        .filter_map(|(i, item)| match item {
            Item::Const(c) if c.value.is_integer() => {
                c.value.to_i64().filter(|v| (4..=100_000).contains(v)).map(|v| (i, v))
            }
            _ => None,
        })
        .collect();
    if !const_sites.is_empty() {
        let start = rng.below(const_sites.len());
        for offset in 0..const_sites.len() {
            let (item_idx, v) = const_sites[(start + offset) % const_sites.len()];
            let const_name = match &p.items[item_idx] {
                Item::Const(c) => c.name.clone(),
                _ => unreachable!(),
            };
            let lo = v / 2 + 1;
            let hi = v - 1;
            if lo > hi {
                continue;
            }
            // up to a handful of split points per constant
            let first_split = lo + (rng.below((hi - lo + 1) as usize) as i64);
            for step in 0..8 {
                if candidates_tried >= SEARCH_CAP {
                    break;
                }
                candidates_tried += 1;
                let split = lo + (first_split - lo + step) % (hi - lo + 1);
                let product = split * (v - split);
                let name = fresh_name(p, "split");
                let mut q = p.clone();
                let var_item = Item::Var(VarDecl {
                    name: name.clone(),
                    domain: Domain::Integer,
                    bounds: Some((Rational::from_int(lo), Rational::from_int(hi))),
                    wheres: vec![],
                });
                let constraint = Item::Constraint(Constraint::new(
                    Expr::mul(
                        Expr::var(name.clone()),
                        Expr::sub(Expr::var(const_name.clone()), Expr::var(name.clone())),
                    ),
                    RelOp::Eq,
                    Expr::int(product),
                ));
                // place after the constant so the reference resolves
                q.items.insert(item_idx + 1, var_item);
                q.items.insert(item_idx + 2, constraint);
                if q.is_valid() && check_guardrails(p, &q, budget).passes() {
                    return Ok(q);
                }
            }
        }
    }

    // form 2: replace a division by a constant with a coupled unknown
    // defined through a product equation: coupled * n == numerator
    let sites = expr_sites(p);
    let is_const_div = |e: &Expr| {
        matches!(e, Expr::Div(_, d)
            if matches!(d.as_ref(), Expr::Const(c) if c.is_integer() && c >= &Rational::from_int(2)))
    };
    for (si, site) in sites.iter().enumerate() {
        let whole = site_expr(p, site);
        let count = count_matching(whole, &is_const_div);
        for j in 0..count {
            if candidates_tried >= SEARCH_CAP {
                break;
            }
            candidates_tried += 1;
            let mut probe = j as i64;
            let Some(Expr::Div(numerator, denom)) = nth_matching(whole, &mut probe, &is_const_div)
            else {
                continue;
            };
            let name = fresh_name(p, "coupled");
            let mut idx = j as i64;
            let replaced = replace_nth(whole, &mut idx, &is_const_div, &|_| Expr::var(name.clone()));
            let mut q = p.clone();
            set_site_expr(&mut q, site, replaced);
            let var_item = Item::Var(VarDecl {
                name: name.clone(),
                domain: Domain::Integer,
                bounds: None,
                wheres: vec![],
            });
            let constraint = Item::Constraint(Constraint::new(
                Expr::mul(Expr::var(name.clone()), denom.as_ref().clone()),
                RelOp::Eq,
                numerator.as_ref().clone(),
            ));
            match &sites[si] {
                ExprSite::Let(i) => {
                    q.items.insert(*i, constraint);
                    q.items.insert(*i, var_item);
                }
                ExprSite::Answer => {
                    q.items.push(var_item);
                    q.items.push(constraint);
                }
            }
            if q.is_valid() && check_guardrails(p, &q, budget).passes() {
                return Ok(q);
            }
        }
    }

    Err(not_applicable(
        kind,
        "no candidate passed guardrails within the search cap",
    ))
}

fn perturb_and_compensate(
    p: &Program,
    delta: &Rational,
    rng: &mut Rng,
) -> Result<Program, NotApplicable> {
    let kind = MutationKind::PerturbAndCompensate;
    let const_indices: Vec<usize> = p
        .items
        .iter()
        .enumerate()
        .filter_map(|(i, item)| matches!(item, Item::Const(_)).then_some(i))
        .collect();
    if const_indices.len() < 2 {
        return Err(not_applicable(kind, "needs at least two constants"));
    }
    let first = const_indices[rng.below(const_indices.len())];
    let rest: Vec<usize> = const_indices.iter().copied().filter(|i| *i != first).collect();
    let second = rest[rng.below(rest.len())];

    // compensation search: smallest adjustment that keeps a unique answer
    let mut adjustments = vec![Rational::zero()];
    for k in 1..=8i64 {
        adjustments.push(Rational::from_int(k));
        adjustments.push(Rational::from_int(-k));
    }
    for adj in adjustments {
        let mut q = p.clone();
        if let Item::Const(c) = &mut q.items[first] {
            c.value = &c.value + delta;
            if !c.value.is_integer() {
                c.domain = Domain::Rational;
            }
        }
        if let Item::Const(c) = &mut q.items[second] {
            c.value = &c.value + &adj;
            if !c.value.is_integer() {
                c.domain = Domain::Rational;
            }
        }
        if q.is_valid() && solve(&q, SolveBudget::default()).is_unique() {
            return Ok(q);
        }
    }
    Err(not_applicable(kind, "no compensation restored solvability"))
}

// ---------------------------------------------------------------------------
// policy-driven mutation

const PER_OP_RETRIES: usize = 5;

/// Samples `chain_depth` operators by weight and applies them in sequence,
/// retrying each on up to five alternative sites. An operator whose every
/// retry fails the guardrails is skipped; if the whole chain produces
/// nothing, the baseline single-operator mutation is returned with
/// `fallback` set.
pub fn mutate(p: &Program, policy: &MutationPolicy) -> MutationResult {
    let budget = SolveBudget::default();
    let mut rng = Rng::new(mix_seed(policy.seed, &[&p.id, "mutate"]));
    let mut current = p.clone();
    let mut trace = Vec::new();

    for _ in 0..policy.chain_depth {
        let kind = policy.sample_kind(&mut rng);
        for _ in 0..PER_OP_RETRIES {
            let op = MutationOp::sample(kind, &mut rng);
            if let Ok(candidate) = apply_op(&current, &op, &mut rng) {
                if candidate.is_valid() && check_guardrails(p, &candidate, budget).passes() {
                    current = candidate;
                    trace.push(kind);
                    break;
                }
            }
        }
    }

    let guardrails = check_guardrails(p, &current, budget);
    if trace.is_empty() || !guardrails.passes() {
        return fallback_mutation(p, policy, budget);
    }
    MutationResult {
        program: current,
        trace,
        guardrails,
        fallback: false,
    }
}

/// Baseline replacement: a single constant scaling, or the identity
/// mutation if even that fails.
fn fallback_mutation(p: &Program, policy: &MutationPolicy, budget: SolveBudget) -> MutationResult {
    let mut rng = Rng::new(mix_seed(policy.seed, &[&p.id, "fallback"]));
    for _ in 0..PER_OP_RETRIES {
        let op = MutationOp::sample(MutationKind::ScaleConstant, &mut rng);
        if let Ok(candidate) = apply_op(p, &op, &mut rng) {
            let guardrails = check_guardrails(p, &candidate, budget);
            if candidate.is_valid() && guardrails.passes() {
                return MutationResult {
                    program: candidate,
                    trace: vec![MutationKind::ScaleConstant],
                    guardrails,
                    fallback: true,
                };
            }
        }
    }
    let guardrails = check_guardrails(p, p, budget);
    MutationResult {
        program: p.clone(),
        trace: vec![],
        guardrails,
        fallback: true,
    }
}

/// Prompt-driven mutation through a chat client. The reply must parse as a
/// program and pass the guardrails; otherwise the deterministic fallback
/// fires, exactly as in [`mutate`].
pub fn llm_mutate(
    p: &Program,
    prompt: &str,
    client: &dyn ChatClient,
) -> Result<MutationResult, ClientError> {
    let budget = SolveBudget::default();
    let request = ChatRequest::new(client.model_id())
        .system(prompt)
        .user(&print_program(p));
    let response = client.complete(&request)?;
    let policy = MutationPolicy::uniform(0);
    match parse_program(response.content.trim()) {
        Ok(candidate) if candidate.is_valid() => {
            let guardrails = check_guardrails(p, &candidate, budget);
            if guardrails.passes() {
                Ok(MutationResult {
                    program: candidate,
                    trace: vec![],
                    guardrails,
                    fallback: false,
                })
            } else {
                Ok(fallback_mutation(p, &policy, budget))
            }
        }
        _ => Ok(fallback_mutation(p, &policy, budget)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::solver::{solve, SolveBudget};

    fn natalia() -> Program {
        parse_program(fixtures::NATALIA).unwrap()
    }

    fn liza() -> Program {
        parse_program(fixtures::LIZA).unwrap()
    }

    #[test]
    fn chain_intermediate_adds_exactly_one_step() {
        let p = natalia();
        let mut rng = Rng::new(7);
        let q = chain_intermediate(&p, &mut rng).unwrap();
        assert_eq!(q.step_count(), p.step_count() + 1);
        let before = solve(&p, SolveBudget::default());
        let after = solve(&q, SolveBudget::default());
        assert_eq!(before.answer(), after.answer());
    }

    #[test]
    fn inject_floor_on_weng_preserves_integer_answer() {
        let p = parse_program(fixtures::WENG).unwrap();
        let mut rng = Rng::new(1);
        let q = inject_floor(&p, &mut rng).unwrap();
        let out = solve(&q, SolveBudget::default());
        assert_eq!(out.answer(), Some(&Rational::from_int(10)));
    }

    #[test]
    fn couple_variables_passes_guardrails_on_natalia() {
        let p = natalia();
        let mut rng = Rng::new(3);
        let q = couple_variables(&p, &mut rng).unwrap();
        assert!(q.unknown_count() > p.unknown_count());
        let report = check_guardrails(&p, &q, SolveBudget::default());
        assert!(report.passes(), "{report:?}");
    }

    #[test]
    fn theme_only_changes_meta_only() {
        let p = liza();
        let policy = MutationPolicy::single(MutationKind::ThemeOnly, 9);
        let r = mutate(&p, &policy);
        assert!(!r.fallback);
        assert_eq!(r.trace, vec![MutationKind::ThemeOnly]);
        let mut stripped = r.program.clone();
        stripped.meta = p.meta.clone();
        assert_eq!(stripped, p);
        assert_eq!(
            solve(&r.program, SolveBudget::default()),
            solve(&p, SolveBudget::default())
        );
    }

    #[test]
    fn mutate_is_deterministic() {
        let p = liza();
        let policy = MutationPolicy::uniform(42);
        let a = mutate(&p, &policy);
        let b = mutate(&p, &policy);
        assert_eq!(a, b);
        assert_eq!(print_program(&a.program), print_program(&b.program));
    }

    #[test]
    fn all_weight_on_coupling_produces_coupled_program() {
        let p = natalia();
        let policy = MutationPolicy::single(MutationKind::CoupleVariables, 11);
        let r = mutate(&p, &policy);
        assert!(!r.fallback, "coupling should not fall back on natalia");
        assert!(r.passed());
        assert!(r.program.unknown_count() > 0);
    }

    #[test]
    fn scale_constant_keeps_size_and_validity() {
        let p = liza();
        let mut rng = Rng::new(5);
        let q = scale_constant(&p, &Rational::from_frac(3, 7), &mut rng).unwrap();
        assert!(q.is_valid());
        assert_eq!(q.size(), p.size());
    }

    #[test]
    fn perturb_and_compensate_keeps_unique_answer() {
        let p = parse_program(fixtures::WENG).unwrap();
        let mut rng = Rng::new(2);
        let q = perturb_and_compensate(&p, &Rational::from_int(2), &mut rng).unwrap();
        assert!(solve(&q, SolveBudget::default()).is_unique());
        assert_ne!(q, p);
    }

    #[test]
    fn couple_variables_splits_total_into_product_constraint() {
        // a seed large enough for the constant-split form: the coupling
        // shows up as u * (total - u) == P with a unique pinned factor
        let p = parse_program(
            r#"problem "totals" {
                 const total: int = 48;
                 const price: int = 3;
                 let sold = total - 6;
                 let gross = sold * price;
                 let refund = gross / 2;
                 let net = gross - refund;
                 answer = net + total;
               }"#,
        )
        .unwrap();
        let mut rng = Rng::new(4);
        let q = couple_variables(&p, &mut rng).unwrap();
        assert_eq!(q.unknown_count(), 1);
        let has_product_eq = q.constraints().any(|c| {
            c.rel == RelOp::Eq && matches!(&c.lhs, Expr::Mul(a, _) if matches!(a.as_ref(), Expr::Var(_)))
        });
        assert!(has_product_eq, "{}", print_program(&q));
        assert!(check_guardrails(&p, &q, SolveBudget::default()).passes());
        // the coupling never changes the answer
        assert_eq!(
            solve(&q, SolveBudget::default()).answer(),
            solve(&p, SolveBudget::default()).answer()
        );
    }

    #[test]
    fn llm_mutate_accepts_valid_reply() {
        use crate::clients::MockChatClient;
        let p = natalia();
        // a legitimate mutation: one extra derivation step
        let reply = r#"problem "natalia" {
             const april_clips: int = 48;
             let may_clips = april_clips / 2;
             answer = april_clips + may_clips;
           }"#;
        let client = MockChatClient::new([reply.to_string()]);
        let result = llm_mutate(&p, "make it multi-step", &client).unwrap();
        assert!(!result.fallback);
        assert!(result.passed());
        assert_eq!(result.program.step_count(), p.step_count() + 1);
    }

    #[test]
    fn llm_mutate_falls_back_on_garbage() {
        use crate::clients::MockChatClient;
        let p = natalia();
        let client = MockChatClient::new(["this is not a program".to_string()]);
        let result = llm_mutate(&p, "modify", &client).unwrap();
        assert!(result.fallback);
        assert!(result.program.is_valid());
    }

    #[test]
    fn llm_mutate_falls_back_on_oversized_reply() {
        use crate::clients::MockChatClient;
        let p = natalia();
        // parses fine but is far more than 1.5x the seed's size
        let reply = r#"problem "natalia" {
             const april_clips: int = 48;
             let a = april_clips / 2;
             let b = a + april_clips;
             let c = b * 2 - a;
             let d = c + b - a;
             let e = d * 3 + c - b + a;
             answer = e + d + c + b + a;
           }"#;
        let client = MockChatClient::new([reply.to_string()]);
        let result = llm_mutate(&p, "modify", &client).unwrap();
        assert!(result.fallback);
        assert!(result.program.is_valid());
    }
}
