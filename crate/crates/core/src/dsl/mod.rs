//! Textual language and in-memory form for symbolic problem programs.
//!
//! A program declares constants, derived quantities (`let`), unknowns with
//! domains, and constraints, and ends with a single answer expression:
//!
//! ```text
//! problem "tanks" {
//!   const total: int unit "liters" = 48;
//!   var x: int in [1, 48];
//!   var y: int in [1, 48];
//!   constraint x + y == total;
//!   constraint x * y == 512;
//!   constraint x > y;
//!   answer = x + y / 2;
//! }
//! ```
//!
//! Items keep their textual order, so print/parse round-trips are exact.
//! Metadata annotations round-trip as `// @key value` comment lines; they
//! never affect semantics or program size.

mod parse;
mod print;

pub use parse::{parse_program, DslError};
pub use print::print_program;

use crate::expr::Expr;
use crate::rational::Rational;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Domain {
    Integer,
    Rational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstDecl {
    pub name: String,
    pub value: Rational,
    pub unit: Option<String>,
    pub domain: Domain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LetDecl {
    pub name: String,
    pub expr: Expr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub domain: Domain,
    /// Inclusive bounds; both present or neither.
    pub bounds: Option<(Rational, Rational)>,
    /// Domain assumptions attached at the declaration.
    pub wheres: Vec<Constraint>,
}

impl VarDecl {
    /// Derived positivity flag: true when the declared bounds or a where
    /// clause force the variable strictly positive.
    pub fn is_positive(&self) -> bool {
        if let Some((lo, _)) = &self.bounds {
            if lo.is_positive() {
                return true;
            }
        }
        self.wheres.iter().any(|c| match (&c.lhs, c.rel, &c.rhs) {
            (Expr::Var(v), RelOp::Gt, Expr::Const(k)) if v == &self.name => !k.is_negative(),
            (Expr::Var(v), RelOp::Ge, Expr::Const(k)) if v == &self.name => k.is_positive(),
            (Expr::Const(k), RelOp::Lt, Expr::Var(v)) if v == &self.name => !k.is_negative(),
            (Expr::Const(k), RelOp::Le, Expr::Var(v)) if v == &self.name => k.is_positive(),
            _ => false,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum RelOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl RelOp {
    pub fn token(self) -> &'static str {
        match self {
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
        }
    }

    pub fn holds(self, lhs: &Rational, rhs: &Rational) -> bool {
        match self {
            RelOp::Eq => lhs == rhs,
            RelOp::Ne => lhs != rhs,
            RelOp::Lt => lhs < rhs,
            RelOp::Le => lhs <= rhs,
            RelOp::Gt => lhs > rhs,
            RelOp::Ge => lhs >= rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub rel: RelOp,
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Constraint {
    pub fn new(lhs: Expr, rel: RelOp, rhs: Expr) -> Self {
        Constraint { rel, lhs, rhs }
    }

    pub fn node_count(&self) -> usize {
        self.lhs.node_count() + self.rhs.node_count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Item {
    Const(ConstDecl),
    Let(LetDecl),
    Var(VarDecl),
    Constraint(Constraint),
}

/// A symbolic problem: declarations, constraints, and one answer expression.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub id: String,
    /// Declarations and constraints in textual order.
    pub items: Vec<Item>,
    pub answer: Expr,
    pub meta: BTreeMap<String, String>,
}

/// The name reserved for the answer slot; never declarable.
pub const ANSWER_NAME: &str = "answer";

impl Program {
    pub fn new(id: impl Into<String>, items: Vec<Item>, answer: Expr) -> Self {
        Program {
            id: id.into(),
            items,
            answer,
            meta: BTreeMap::new(),
        }
    }

    pub fn consts(&self) -> impl Iterator<Item = &ConstDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Const(c) => Some(c),
            _ => None,
        })
    }

    pub fn lets(&self) -> impl Iterator<Item = &LetDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Let(l) => Some(l),
            _ => None,
        })
    }

    pub fn unknowns(&self) -> impl Iterator<Item = &VarDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Var(v) => Some(v),
            _ => None,
        })
    }

    /// Standalone constraints only; use [`Program::all_constraints`] to
    /// include var where clauses.
    pub fn constraints(&self) -> impl Iterator<Item = &Constraint> {
        self.items.iter().filter_map(|i| match i {
            Item::Constraint(c) => Some(c),
            _ => None,
        })
    }

    /// Standalone constraints plus where clauses, in declaration order.
    pub fn all_constraints(&self) -> Vec<&Constraint> {
        let mut out = Vec::new();
        for item in &self.items {
            match item {
                Item::Var(v) => out.extend(v.wheres.iter()),
                Item::Constraint(c) => out.push(c),
                _ => {}
            }
        }
        out
    }

    pub fn unknown_count(&self) -> usize {
        self.unknowns().count()
    }

    pub fn declared_names(&self) -> BTreeSet<&str> {
        self.items
            .iter()
            .filter_map(|i| match i {
                Item::Const(c) => Some(c.name.as_str()),
                Item::Let(l) => Some(l.name.as_str()),
                Item::Var(v) => Some(v.name.as_str()),
                Item::Constraint(_) => None,
            })
            .collect()
    }

    /// Count of derivation steps: lets plus constraints (where clauses
    /// included). Used by difficulty checks.
    pub fn step_count(&self) -> usize {
        self.lets().count() + self.all_constraints().len()
    }

    /// AST-node size used by the length guardrail: one per declaration,
    /// plus the node counts of all let bodies, constraints (where clauses
    /// included), and the answer. Bounds, units, and metadata do not count,
    /// so the measure is immune to renaming and formatting.
    pub fn size(&self) -> usize {
        let mut size = self.answer.node_count();
        for item in &self.items {
            match item {
                Item::Const(_) => size += 1,
                Item::Let(l) => size += 1 + l.expr.node_count(),
                Item::Var(v) => {
                    size += 1;
                    size += v.wheres.iter().map(Constraint::node_count).sum::<usize>();
                }
                Item::Constraint(c) => size += c.node_count(),
            }
        }
        size
    }

    /// Length of the longest derivation chain a solver must follow:
    /// through lets, ending at the answer or a constraint. A program whose
    /// answer reads only constants has depth 1. An unknown counts one step
    /// plus the depth of whatever its constraints derive it from, since
    /// resolving it is itself a derivation.
    pub fn chain_depth(&self) -> usize {
        // pass 1: let depths with every unknown provisionally at one step
        let mut depth: BTreeMap<String, usize> = self
            .unknowns()
            .map(|v| (v.name.clone(), 1))
            .collect();
        let let_depths = |depth: &mut BTreeMap<String, usize>| {
            for l in self.lets() {
                let d = expr_depth(&l.expr, depth);
                depth.insert(l.name.clone(), d);
            }
        };
        let_depths(&mut depth);
        // pass 2: unknowns inherit the chains their constraints reference
        let unknown_names: BTreeSet<String> = self.unknowns().map(|v| v.name.clone()).collect();
        let mut refined = depth.clone();
        for c in self.all_constraints() {
            let mut vars = c.lhs.free_vars();
            vars.extend(c.rhs.free_vars());
            let feeding = vars
                .iter()
                .filter(|v| !unknown_names.contains(*v))
                .filter_map(|v| depth.get(v).copied())
                .max()
                .unwrap_or(0);
            for v in vars {
                if unknown_names.contains(&v) {
                    let e = refined.get_mut(&v).expect("declared unknown");
                    *e = (*e).max(1 + feeding);
                }
            }
        }
        // pass 3: settle let depths on the refined unknowns
        let_depths(&mut refined);

        let mut max = 0usize;
        for item in &self.items {
            match item {
                Item::Let(l) => max = max.max(refined[&l.name]),
                Item::Constraint(c) => {
                    max = max
                        .max(expr_depth(&c.lhs, &refined))
                        .max(expr_depth(&c.rhs, &refined));
                }
                _ => {}
            }
        }
        max.max(expr_depth(&self.answer, &refined))
    }

    /// Structural validation; an empty result means every invariant holds.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut declared: BTreeSet<&str> = BTreeSet::new();

        let check_expr = |e: &Expr, declared: &BTreeSet<&str>, at: &str, out: &mut Vec<Violation>| {
            for v in e.free_vars() {
                if !declared.contains(v.as_str()) {
                    out.push(Violation {
                        rule: ViolationKind::UseBeforeDeclare(v.clone()),
                        location: at.to_string(),
                    });
                }
            }
            check_no_zero_denominator(e, at, out);
        };

        for item in &self.items {
            let name = match item {
                Item::Const(c) => Some(&c.name),
                Item::Let(l) => Some(&l.name),
                Item::Var(v) => Some(&v.name),
                Item::Constraint(_) => None,
            };
            if let Some(name) = name {
                if name == ANSWER_NAME {
                    violations.push(Violation {
                        rule: ViolationKind::ReservedName(name.clone()),
                        location: name.clone(),
                    });
                } else if !declared.insert(name.as_str()) {
                    violations.push(Violation {
                        rule: ViolationKind::DuplicateName(name.clone()),
                        location: name.clone(),
                    });
                }
            }
            match item {
                Item::Const(c) => {
                    if c.domain == Domain::Integer && !c.value.is_integer() {
                        violations.push(Violation {
                            rule: ViolationKind::NonIntegerConst(c.name.clone()),
                            location: c.name.clone(),
                        });
                    }
                }
                Item::Let(l) => {
                    // the let's own name is already visible here; reject
                    // self-reference by checking the expr first
                    let mut without = declared.clone();
                    without.remove(l.name.as_str());
                    check_expr(&l.expr, &without, &l.name, &mut violations);
                }
                Item::Var(v) => {
                    if let Some((lo, hi)) = &v.bounds {
                        if lo > hi {
                            violations.push(Violation {
                                rule: ViolationKind::EmptyDomain(v.name.clone()),
                                location: v.name.clone(),
                            });
                        }
                    }
                    for w in &v.wheres {
                        check_expr(&w.lhs, &declared, &v.name, &mut violations);
                        check_expr(&w.rhs, &declared, &v.name, &mut violations);
                    }
                }
                Item::Constraint(c) => {
                    check_expr(&c.lhs, &declared, "constraint", &mut violations);
                    check_expr(&c.rhs, &declared, "constraint", &mut violations);
                }
            }
        }
        check_expr(&self.answer, &declared, ANSWER_NAME, &mut violations);
        violations
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Straight-line programs have no unknowns.
    pub fn is_straight_line(&self) -> bool {
        self.unknown_count() == 0
    }
}

fn expr_depth(e: &Expr, depth: &BTreeMap<String, usize>) -> usize {
    1 + e
        .free_vars()
        .iter()
        .filter_map(|v| depth.get(v).copied())
        .max()
        .unwrap_or(0)
}

fn check_no_zero_denominator(e: &Expr, at: &str, out: &mut Vec<Violation>) {
    match e {
        Expr::Div(a, b) => {
            if matches!(b.as_ref(), Expr::Const(c) if c.is_zero()) {
                out.push(Violation {
                    rule: ViolationKind::ZeroDenominator,
                    location: at.to_string(),
                });
            }
            check_no_zero_denominator(a, at, out);
            check_no_zero_denominator(b, at, out);
        }
        Expr::Add(a, b)
        | Expr::Sub(a, b)
        | Expr::Mul(a, b)
        | Expr::Mod(a, b)
        | Expr::Min(a, b)
        | Expr::Max(a, b) => {
            check_no_zero_denominator(a, at, out);
            check_no_zero_denominator(b, at, out);
        }
        Expr::Pow(a, _) | Expr::Floor(a) | Expr::Abs(a) => check_no_zero_denominator(a, at, out),
        Expr::IfPositive(c, t, f) => {
            check_no_zero_denominator(c, at, out);
            check_no_zero_denominator(t, at, out);
            check_no_zero_denominator(f, at, out);
        }
        Expr::Const(_) | Expr::Var(_) => {}
    }
}

/// Exact size ratio `mutated / original` used by the 1.5x length guardrail.
pub fn size_ratio(original: &Program, mutated: &Program) -> Rational {
    Rational::from_frac(mutated.size() as i64, original.size().max(1) as i64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub rule: ViolationKind,
    pub location: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViolationKind {
    DuplicateName(String),
    UseBeforeDeclare(String),
    ReservedName(String),
    EmptyDomain(String),
    NonIntegerConst(String),
    ZeroDenominator,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            ViolationKind::DuplicateName(n) => write!(f, "duplicate name `{n}`"),
            ViolationKind::UseBeforeDeclare(n) => {
                write!(f, "`{n}` used before declaration (at {})", self.location)
            }
            ViolationKind::ReservedName(n) => write!(f, "`{n}` is reserved"),
            ViolationKind::EmptyDomain(n) => write!(f, "empty domain for `{n}`"),
            ViolationKind::NonIntegerConst(n) => {
                write!(f, "const `{n}` declared int but has a fractional value")
            }
            ViolationKind::ZeroDenominator => {
                write!(f, "literal zero denominator (at {})", self.location)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn trivial() -> Program {
        Program::new("p", vec![], Expr::add(Expr::int(1), Expr::int(1)))
    }

    #[test]
    fn size_of_answer_only() {
        assert_eq!(trivial().size(), 3);
    }

    #[test]
    fn validate_trivial_ok() {
        assert!(trivial().validate().is_empty());
    }

    #[test]
    fn validate_catches_duplicate() {
        let p = Program::new(
            "p",
            vec![
                Item::Const(ConstDecl {
                    name: "a".into(),
                    value: Rational::from_int(1),
                    unit: None,
                    domain: Domain::Integer,
                }),
                Item::Const(ConstDecl {
                    name: "a".into(),
                    value: Rational::from_int(2),
                    unit: None,
                    domain: Domain::Integer,
                }),
            ],
            Expr::var("a"),
        );
        assert!(p
            .validate()
            .iter()
            .any(|v| matches!(&v.rule, ViolationKind::DuplicateName(n) if n == "a")));
    }

    #[test]
    fn validate_catches_empty_domain() {
        let p = Program::new(
            "p",
            vec![Item::Var(VarDecl {
                name: "x".into(),
                domain: Domain::Integer,
                bounds: Some((Rational::from_int(5), Rational::from_int(1))),
                wheres: vec![],
            })],
            Expr::var("x"),
        );
        assert!(p
            .validate()
            .iter()
            .any(|v| matches!(&v.rule, ViolationKind::EmptyDomain(_))));
    }

    #[test]
    fn validate_catches_free_variable() {
        let p = Program::new("p", vec![], Expr::var("x"));
        assert!(p
            .validate()
            .iter()
            .any(|v| matches!(&v.rule, ViolationKind::UseBeforeDeclare(n) if n == "x")));
    }

    #[test]
    fn chain_depth_counts_let_chains() {
        // answer over consts only: depth 1
        let p = Program::new(
            "p",
            vec![Item::Const(ConstDecl {
                name: "april".into(),
                value: Rational::from_int(48),
                unit: None,
                domain: Domain::Integer,
            })],
            Expr::add(Expr::var("april"), Expr::div(Expr::var("april"), Expr::int(2))),
        );
        assert_eq!(p.chain_depth(), 1);

        // one chained let: depth 2
        let p = Program::new(
            "p",
            vec![
                Item::Const(ConstDecl {
                    name: "april".into(),
                    value: Rational::from_int(48),
                    unit: None,
                    domain: Domain::Integer,
                }),
                Item::Let(LetDecl {
                    name: "may".into(),
                    expr: Expr::div(Expr::var("april"), Expr::int(2)),
                }),
            ],
            Expr::add(Expr::var("april"), Expr::var("may")),
        );
        assert_eq!(p.chain_depth(), 2);
    }
}
