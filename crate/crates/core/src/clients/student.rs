//! Student model boundary: a deterministic capability-profile mock, plus
//! the chat path that asks a real model and parses its boxed answer.
//!
//! The mock consumes the symbolic program rather than the rendered text:
//! the loop's control signal is only correct/incorrect, which the program
//! supplies faithfully. A profile fails a problem when the program needs a
//! node kind outside its capability set (dropping the unsupported
//! construct and answering from what remains) or when the derivation chain
//! is deeper than it can follow (skipping the too-deep steps). A seeded
//! slip then flips the final arithmetic operation with the configured
//! probability. Produced answers are guaranteed wrong whenever a failure
//! fired, so shrinking capabilities or depth never turns an incorrect
//! outcome correct.

use super::{ChatClient, ChatRequest, ClientError};
use crate::dsl::{Item, Program};
use crate::expr::{Env, Expr};
use crate::rational::Rational;
use crate::rng::{mix_seed, Rng};
use crate::solver::{solve, SolveBudget};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Node kinds a student can handle, plus the structural skill of solving
/// product-coupled unknowns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Capability {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Floor,
    Mod,
    Abs,
    Min,
    Max,
    Branch,
    /// Constraints multiplying two unknown-dependent quantities.
    ProductCoupling,
}

impl Capability {
    pub const ALL: [Capability; 12] = [
        Capability::Add,
        Capability::Sub,
        Capability::Mul,
        Capability::Div,
        Capability::Pow,
        Capability::Floor,
        Capability::Mod,
        Capability::Abs,
        Capability::Min,
        Capability::Max,
        Capability::Branch,
        Capability::ProductCoupling,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub capabilities: BTreeSet<Capability>,
    /// Longest derivation chain the student can follow; `None` = unlimited.
    pub max_depth: Option<u32>,
    /// Probability of a final-step slip, in `[0, 1]`.
    pub slip: Rational,
    pub seed: u64,
}

impl StudentProfile {
    pub fn omniscient() -> Self {
        StudentProfile {
            capabilities: Capability::ALL.into_iter().collect(),
            max_depth: None,
            slip: Rational::zero(),
            seed: 0,
        }
    }

    pub fn depth_limited(depth: u32) -> Self {
        StudentProfile {
            max_depth: Some(depth),
            ..StudentProfile::omniscient()
        }
    }

    /// The reference weak student: follows at most two chained steps and
    /// cannot solve product couplings.
    pub fn depth2_no_product() -> Self {
        let mut caps: BTreeSet<Capability> = Capability::ALL.into_iter().collect();
        caps.remove(&Capability::ProductCoupling);
        StudentProfile {
            capabilities: caps,
            max_depth: Some(2),
            slip: Rational::zero(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureTag {
    None,
    Capability,
    Depth,
    Slip,
    ParseFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentOutcome {
    /// `None` is a refusal.
    pub produced: Option<Rational>,
    pub correct: bool,
    pub rationale: FailureTag,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum StudentError {
    #[error("no unique ground truth for `{0}`")]
    NoGroundTruth(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

pub enum Student<'a> {
    Mock(&'a StudentProfile),
    Llm {
        client: &'a dyn ChatClient,
        solve_prompt: &'a str,
    },
}

/// Answers the problem, mock or live. The program must solve uniquely.
pub fn student_answer(
    p: &Program,
    rendered_text: &str,
    student: &Student<'_>,
) -> Result<StudentOutcome, StudentError> {
    let truth = solve(p, SolveBudget::default())
        .answer()
        .cloned()
        .ok_or_else(|| StudentError::NoGroundTruth(p.id.clone()))?;
    match student {
        Student::Mock(profile) => Ok(mock_answer(p, &truth, profile)),
        Student::Llm {
            client,
            solve_prompt,
        } => {
            let request = ChatRequest::new(client.model_id())
                .system(solve_prompt)
                .user(rendered_text);
            let response = client.complete(&request)?;
            Ok(match extract_boxed(&response.content) {
                Some(value) => {
                    let correct = value == truth;
                    StudentOutcome {
                        produced: Some(value),
                        correct,
                        rationale: FailureTag::None,
                    }
                }
                None => StudentOutcome {
                    produced: None,
                    correct: false,
                    rationale: FailureTag::ParseFailure,
                },
            })
        }
    }
}

/// Capabilities the program requires of a student.
pub fn required_capabilities(p: &Program) -> BTreeSet<Capability> {
    let mut needed = BTreeSet::new();
    let unknown_dependent = unknown_dependent_names(p);
    let mut visit = |e: &Expr| collect_caps(e, &unknown_dependent, &mut needed);
    for item in &p.items {
        match item {
            Item::Let(l) => visit(&l.expr),
            Item::Constraint(c) => {
                visit(&c.lhs);
                visit(&c.rhs);
            }
            Item::Var(v) => {
                for w in &v.wheres {
                    visit(&w.lhs);
                    visit(&w.rhs);
                }
            }
            Item::Const(_) => {}
        }
    }
    visit(&p.answer);
    needed
}

/// Names whose value depends on an unknown, transitively through lets.
fn unknown_dependent_names(p: &Program) -> BTreeSet<String> {
    let mut dependent: BTreeSet<String> = p.unknowns().map(|v| v.name.clone()).collect();
    for l in p.lets() {
        if l.expr.free_vars().iter().any(|v| dependent.contains(v)) {
            dependent.insert(l.name.clone());
        }
    }
    dependent
}

fn depends_on_unknown(e: &Expr, dependent: &BTreeSet<String>) -> bool {
    e.free_vars().iter().any(|v| dependent.contains(v))
}

fn collect_caps(e: &Expr, dependent: &BTreeSet<String>, out: &mut BTreeSet<Capability>) {
    match e {
        Expr::Const(_) | Expr::Var(_) => {}
        Expr::Add(a, b) => {
            out.insert(Capability::Add);
            collect_caps(a, dependent, out);
            collect_caps(b, dependent, out);
        }
        Expr::Sub(a, b) => {
            out.insert(Capability::Sub);
            collect_caps(a, dependent, out);
            collect_caps(b, dependent, out);
        }
        Expr::Mul(a, b) => {
            out.insert(Capability::Mul);
            if depends_on_unknown(a, dependent) && depends_on_unknown(b, dependent) {
                out.insert(Capability::ProductCoupling);
            }
            collect_caps(a, dependent, out);
            collect_caps(b, dependent, out);
        }
        Expr::Div(a, b) => {
            out.insert(Capability::Div);
            if depends_on_unknown(b, dependent) {
                out.insert(Capability::ProductCoupling);
            }
            collect_caps(a, dependent, out);
            collect_caps(b, dependent, out);
        }
        Expr::Pow(a, k) => {
            out.insert(Capability::Pow);
            if *k >= 2 && depends_on_unknown(a, dependent) {
                out.insert(Capability::ProductCoupling);
            }
            collect_caps(a, dependent, out);
        }
        Expr::Floor(a) => {
            out.insert(Capability::Floor);
            collect_caps(a, dependent, out);
        }
        Expr::Mod(a, b) => {
            out.insert(Capability::Mod);
            collect_caps(a, dependent, out);
            collect_caps(b, dependent, out);
        }
        Expr::Abs(a) => {
            out.insert(Capability::Abs);
            collect_caps(a, dependent, out);
        }
        Expr::Min(a, b) => {
            out.insert(Capability::Min);
            collect_caps(a, dependent, out);
            collect_caps(b, dependent, out);
        }
        Expr::Max(a, b) => {
            out.insert(Capability::Max);
            collect_caps(a, dependent, out);
            collect_caps(b, dependent, out);
        }
        Expr::IfPositive(c, t, f) => {
            out.insert(Capability::Branch);
            collect_caps(c, dependent, out);
            collect_caps(t, dependent, out);
            collect_caps(f, dependent, out);
        }
    }
}

fn mock_answer(p: &Program, truth: &Rational, profile: &StudentProfile) -> StudentOutcome {
    let missing: BTreeSet<Capability> = required_capabilities(p)
        .difference(&profile.capabilities)
        .copied()
        .collect();
    let over_depth = profile
        .max_depth
        .is_some_and(|d| p.chain_depth() as u32 > d);

    let (mut produced, mut tag) = if !missing.is_empty() {
        (dropped_capability_answer(p, &missing), FailureTag::Capability)
    } else if over_depth {
        (
            truncated_depth_answer(p, profile.max_depth.unwrap()),
            FailureTag::Depth,
        )
    } else {
        (Some(truth.clone()), FailureTag::None)
    };

    // a failed derivation must not accidentally match the truth
    if tag != FailureTag::None && produced.as_ref() == Some(truth) {
        produced = Some(truth + &Rational::one());
    }
    if tag != FailureTag::None && produced.is_none() {
        produced = Some(truth + &Rational::one());
    }

    // seeded slip on the final arithmetic step
    if tag == FailureTag::None && !profile.slip.is_zero() {
        let mut rng = Rng::new(mix_seed(profile.seed, &[&p.id, "slip"]));
        let draw = Rational::new(
            num_bigint::BigInt::from(rng.next_u64()),
            num_bigint::BigInt::from(1u128 << 64),
        )
        .expect("nonzero denominator");
        if draw < profile.slip {
            let slipped = slip_answer(p, truth);
            produced = Some(slipped);
            tag = FailureTag::Slip;
        }
    }

    let correct = produced.as_ref() == Some(truth);
    StudentOutcome {
        produced,
        correct,
        rationale: if correct { FailureTag::None } else { tag },
    }
}

/// Removes constraints and strips expression nodes the student cannot
/// handle, then re-solves what is left.
fn dropped_capability_answer(p: &Program, missing: &BTreeSet<Capability>) -> Option<Rational> {
    let dependent = unknown_dependent_names(p);
    let needs_missing = |e: &Expr| -> bool {
        let mut caps = BTreeSet::new();
        collect_caps(e, &dependent, &mut caps);
        caps.intersection(missing).next().is_some()
    };
    let mut q = p.clone();
    q.items.retain(|item| match item {
        Item::Constraint(c) => !needs_missing(&c.lhs) && !needs_missing(&c.rhs),
        _ => true,
    });
    for item in q.items.iter_mut() {
        match item {
            Item::Let(l) => l.expr = strip_unsupported(&l.expr, missing),
            Item::Var(v) => {
                v.wheres
                    .retain(|w| !needs_missing(&w.lhs) && !needs_missing(&w.rhs));
            }
            _ => {}
        }
    }
    q.answer = strip_unsupported(&q.answer, missing);
    let out = solve(&q, SolveBudget::default());
    out.answer().cloned()
}

/// Replaces an unsupported node with its first operand, i.e. the student
/// drops the step it cannot perform.
fn strip_unsupported(e: &Expr, missing: &BTreeSet<Capability>) -> Expr {
    let has = |c: Capability| missing.contains(&c);
    let rec = |x: &Expr| strip_unsupported(x, missing);
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Add(a, b) => {
            if has(Capability::Add) {
                rec(a)
            } else {
                Expr::add(rec(a), rec(b))
            }
        }
        Expr::Sub(a, b) => {
            if has(Capability::Sub) {
                rec(a)
            } else {
                Expr::sub(rec(a), rec(b))
            }
        }
        Expr::Mul(a, b) => {
            if has(Capability::Mul) {
                rec(a)
            } else {
                Expr::mul(rec(a), rec(b))
            }
        }
        Expr::Div(a, b) => {
            if has(Capability::Div) {
                rec(a)
            } else {
                Expr::div(rec(a), rec(b))
            }
        }
        Expr::Pow(a, k) => {
            if has(Capability::Pow) {
                rec(a)
            } else {
                Expr::Pow(Box::new(rec(a)), *k)
            }
        }
        Expr::Floor(a) => {
            if has(Capability::Floor) {
                rec(a)
            } else {
                Expr::floor(rec(a))
            }
        }
        Expr::Mod(a, b) => {
            if has(Capability::Mod) {
                rec(a)
            } else {
                Expr::Mod(Box::new(rec(a)), Box::new(rec(b)))
            }
        }
        Expr::Abs(a) => {
            if has(Capability::Abs) {
                rec(a)
            } else {
                Expr::Abs(Box::new(rec(a)))
            }
        }
        Expr::Min(a, b) => {
            if has(Capability::Min) {
                rec(a)
            } else {
                Expr::Min(Box::new(rec(a)), Box::new(rec(b)))
            }
        }
        Expr::Max(a, b) => {
            if has(Capability::Max) {
                rec(a)
            } else {
                Expr::Max(Box::new(rec(a)), Box::new(rec(b)))
            }
        }
        Expr::IfPositive(c, t, f) => {
            if has(Capability::Branch) {
                rec(t)
            } else {
                Expr::IfPositive(Box::new(rec(c)), Box::new(rec(t)), Box::new(rec(f)))
            }
        }
    }
}

/// Evaluates with only the lets within the depth limit; skipped quantities
/// read as zero.
fn truncated_depth_answer(p: &Program, max_depth: u32) -> Option<Rational> {
    let consts: Env = p.consts().map(|c| (c.name.clone(), c.value.clone())).collect();
    // unknowns get their witness values; the student is assumed to have
    // found them but to lose track of deep derivations
    let witness = match solve(p, SolveBudget::default()).verdict {
        crate::solver::Verdict::Unique { witness, .. } => witness,
        _ => BTreeMap::new(),
    };
    let mut env = consts;
    env.extend(witness);
    let mut depth: BTreeMap<String, u32> = BTreeMap::new();
    for l in p.lets() {
        let d = 1 + l
            .expr
            .free_vars()
            .iter()
            .filter_map(|v| depth.get(v).copied())
            .max()
            .unwrap_or(0);
        depth.insert(l.name.clone(), d);
        if d <= max_depth {
            if let Ok(value) = l.expr.eval(&env) {
                env.insert(l.name.clone(), value);
            }
        } else {
            env.insert(l.name.clone(), Rational::zero());
        }
    }
    p.answer.eval(&env).ok()
}

/// Flips the final arithmetic operation of the answer expression.
fn slip_answer(p: &Program, truth: &Rational) -> Rational {
    let flipped = match &p.answer {
        Expr::Add(a, b) => Some(Expr::sub(a.as_ref().clone(), b.as_ref().clone())),
        Expr::Sub(a, b) => Some(Expr::add(a.as_ref().clone(), b.as_ref().clone())),
        Expr::Mul(a, b) => Some(Expr::div(a.as_ref().clone(), b.as_ref().clone())),
        Expr::Div(a, b) => Some(Expr::mul(a.as_ref().clone(), b.as_ref().clone())),
        _ => None,
    };
    if let Some(expr) = flipped {
        let mut q = p.clone();
        q.answer = expr;
        if let Some(v) = solve(&q, SolveBudget::default()).answer() {
            if v != truth {
                return v.clone();
            }
        }
    }
    truth + &Rational::one()
}

/// Extracts the last `\boxed{...}` payload as an exact rational.
pub fn extract_boxed(text: &str) -> Option<Rational> {
    let marker = "\\boxed{";
    let start = text.rfind(marker)? + marker.len();
    let rest = &text[start..];
    let mut level = 1;
    let mut end = None;
    for (i, c) in rest.char_indices() {
        match c {
            '{' => level += 1,
            '}' => {
                level -= 1;
                if level == 0 {
                    end = Some(i);
                    break;
                }
            }
            _ => {}
        }
    }
    let payload = &rest[..end?];
    let cleaned = payload.replace(['$', ' ', '\\'], "");
    Rational::parse(&cleaned)
}
