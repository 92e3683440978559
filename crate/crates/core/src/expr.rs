//! Expression trees over exact rationals.
//!
//! `Expr` is the unit of all arithmetic in problem programs: constants,
//! variable references, and a small fixed set of operators. Evaluation is
//! exact; `Floor` rounds toward negative infinity and `Mod` is Euclidean,
//! matching SMT-LIB integer semantics.

use crate::rational::Rational;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Environment binding variable names to values.
pub type Env = std::collections::BTreeMap<String, Rational>;

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(Rational),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Exponent is a literal nonnegative integer, not a subexpression.
    Pow(Box<Expr>, u32),
    Floor(Box<Expr>),
    Mod(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    /// Selects the second child when the first evaluates > 0, else the third.
    IfPositive(Box<Expr>, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("mod requires integer operands with nonzero modulus, got `{0}`")]
    NonIntegerModOperand(String),
}

// constructor helpers share names with the operator traits on purpose
#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Const(Rational::from_int(n))
    }

    pub fn rat(n: i64, d: i64) -> Expr {
        Expr::Const(Rational::from_frac(n, d))
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn floor(a: Expr) -> Expr {
        Expr::Floor(Box::new(a))
    }

    /// Exact evaluation under `env`. Every variable must be bound; division
    /// by zero and non-integer mod operands are reported with the offending
    /// subexpression.
    pub fn eval(&self, env: &Env) -> Result<Rational, EvalError> {
        match self {
            Expr::Const(r) => Ok(r.clone()),
            Expr::Var(name) => env
                .get(name)
                .cloned()
                .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
            Expr::Add(a, b) => Ok(&a.eval(env)? + &b.eval(env)?),
            Expr::Sub(a, b) => Ok(&a.eval(env)? - &b.eval(env)?),
            Expr::Mul(a, b) => Ok(&a.eval(env)? * &b.eval(env)?),
            Expr::Div(a, b) => {
                let d = b.eval(env)?;
                if d.is_zero() {
                    return Err(EvalError::DivisionByZero(self.to_string()));
                }
                Ok(&a.eval(env)? / &d)
            }
            Expr::Pow(a, k) => Ok(a.eval(env)?.pow(*k)),
            Expr::Floor(a) => Ok(a.eval(env)?.floor()),
            Expr::Mod(a, m) => {
                let a = a.eval(env)?;
                let m = m.eval(env)?;
                a.mod_euclid(&m)
                    .ok_or_else(|| EvalError::NonIntegerModOperand(self.to_string()))
            }
            Expr::Abs(a) => Ok(a.eval(env)?.abs()),
            Expr::Min(a, b) => {
                let a = a.eval(env)?;
                let b = b.eval(env)?;
                Ok(if a <= b { a } else { b })
            }
            Expr::Max(a, b) => {
                let a = a.eval(env)?;
                let b = b.eval(env)?;
                Ok(if a >= b { a } else { b })
            }
            Expr::IfPositive(c, t, e) => {
                if c.eval(env)?.is_positive() {
                    t.eval(env)
                } else {
                    e.eval(env)
                }
            }
        }
    }

    /// Number of nodes in the tree. The `Pow` exponent literal counts as
    /// part of the `Pow` node itself.
    pub fn node_count(&self) -> usize {
        1 + match self {
            Expr::Const(_) | Expr::Var(_) => 0,
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Mod(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => a.node_count() + b.node_count(),
            Expr::Pow(a, _) | Expr::Floor(a) | Expr::Abs(a) => a.node_count(),
            Expr::IfPositive(c, t, e) => c.node_count() + t.node_count() + e.node_count(),
        }
    }

    /// All variable names occurring in the tree, deduplicated.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Mod(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Pow(a, _) | Expr::Floor(a) | Expr::Abs(a) => a.collect_vars(out),
            Expr::IfPositive(c, t, e) => {
                c.collect_vars(out);
                t.collect_vars(out);
                e.collect_vars(out);
            }
        }
    }

    /// Value-preserving simplification: constant folding plus identity
    /// elimination. Never grows the tree and is idempotent. Folding that
    /// would introduce an evaluation error (0 denominator, bad mod) is
    /// skipped, leaving the node as simplified children.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Add(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
                    (Expr::Const(x), _) if x.is_zero() => b,
                    (_, Expr::Const(y)) if y.is_zero() => a,
                    _ => Expr::add(a, b),
                }
            }
            Expr::Sub(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
                    (_, Expr::Const(y)) if y.is_zero() => a,
                    // 0 - (0 - x) => x
                    (Expr::Const(x), Expr::Sub(inner_a, inner_b)) if x.is_zero() => {
                        if matches!(inner_a.as_ref(), Expr::Const(c) if c.is_zero()) {
                            inner_b.as_ref().clone()
                        } else {
                            Expr::sub(a, b)
                        }
                    }
                    _ => Expr::sub(a, b),
                }
            }
            Expr::Mul(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
                    (Expr::Const(x), _) if x.is_zero() => Expr::Const(Rational::zero()),
                    (_, Expr::Const(y)) if y.is_zero() => Expr::Const(Rational::zero()),
                    (Expr::Const(x), _) if x == &Rational::one() => b,
                    (_, Expr::Const(y)) if y == &Rational::one() => a,
                    _ => Expr::mul(a, b),
                }
            }
            Expr::Div(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Expr::Const(x), Expr::Const(y)) if !y.is_zero() => Expr::Const(x / y),
                    (_, Expr::Const(y)) if y == &Rational::one() => a,
                    // keep the original denominator if it simplified to a
                    // literal zero so the tree invariant is preserved
                    (_, Expr::Const(y)) if y.is_zero() => self.clone(),
                    _ => Expr::div(a, b),
                }
            }
            Expr::Pow(a, k) => {
                let a = a.simplify();
                match (&a, k) {
                    (_, 0) => Expr::Const(Rational::one()),
                    (_, 1) => a,
                    (Expr::Const(x), _) => Expr::Const(x.pow(*k)),
                    _ => Expr::Pow(Box::new(a), *k),
                }
            }
            Expr::Floor(a) => {
                let a = a.simplify();
                match &a {
                    Expr::Const(x) => Expr::Const(x.floor()),
                    _ => Expr::floor(a),
                }
            }
            Expr::Mod(a, m) => {
                let (a, m) = (a.simplify(), m.simplify());
                match (&a, &m) {
                    (Expr::Const(x), Expr::Const(y)) => match x.mod_euclid(y) {
                        Some(r) => Expr::Const(r),
                        None => Expr::Mod(Box::new(a), Box::new(m)),
                    },
                    _ => Expr::Mod(Box::new(a), Box::new(m)),
                }
            }
            Expr::Abs(a) => {
                let a = a.simplify();
                match &a {
                    Expr::Const(x) => Expr::Const(x.abs()),
                    _ => Expr::Abs(Box::new(a)),
                }
            }
            Expr::Min(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Expr::Const(x), Expr::Const(y)) => {
                        Expr::Const(if x <= y { x.clone() } else { y.clone() })
                    }
                    _ => Expr::Min(Box::new(a), Box::new(b)),
                }
            }
            Expr::Max(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Expr::Const(x), Expr::Const(y)) => {
                        Expr::Const(if x >= y { x.clone() } else { y.clone() })
                    }
                    _ => Expr::Max(Box::new(a), Box::new(b)),
                }
            }
            Expr::IfPositive(c, t, e) => {
                let c = c.simplify();
                match &c {
                    Expr::Const(x) => {
                        if x.is_positive() {
                            t.simplify()
                        } else {
                            e.simplify()
                        }
                    }
                    _ => Expr::IfPositive(Box::new(c), Box::new(t.simplify()), Box::new(e.simplify())),
                }
            }
        }
    }

    /// Rewrites every occurrence of `Var(name)` with `replacement`.
    pub fn substitute(&self, name: &str, replacement: &Expr) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(v) => {
                if v == name {
                    replacement.clone()
                } else {
                    self.clone()
                }
            }
            Expr::Add(a, b) => Expr::add(a.substitute(name, replacement), b.substitute(name, replacement)),
            Expr::Sub(a, b) => Expr::sub(a.substitute(name, replacement), b.substitute(name, replacement)),
            Expr::Mul(a, b) => Expr::mul(a.substitute(name, replacement), b.substitute(name, replacement)),
            Expr::Div(a, b) => Expr::div(a.substitute(name, replacement), b.substitute(name, replacement)),
            Expr::Pow(a, k) => Expr::Pow(Box::new(a.substitute(name, replacement)), *k),
            Expr::Floor(a) => Expr::floor(a.substitute(name, replacement)),
            Expr::Mod(a, b) => Expr::Mod(
                Box::new(a.substitute(name, replacement)),
                Box::new(b.substitute(name, replacement)),
            ),
            Expr::Abs(a) => Expr::Abs(Box::new(a.substitute(name, replacement))),
            Expr::Min(a, b) => Expr::Min(
                Box::new(a.substitute(name, replacement)),
                Box::new(b.substitute(name, replacement)),
            ),
            Expr::Max(a, b) => Expr::Max(
                Box::new(a.substitute(name, replacement)),
                Box::new(b.substitute(name, replacement)),
            ),
            Expr::IfPositive(c, t, e) => Expr::IfPositive(
                Box::new(c.substitute(name, replacement)),
                Box::new(t.substitute(name, replacement)),
                Box::new(e.substitute(name, replacement)),
            ),
        }
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized except for leaves; the DSL printer produces the
    /// canonical human-facing form instead.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(r) => write!(f, "{r}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a} ^ {k})"),
            Expr::Floor(a) => write!(f, "floor({a})"),
            Expr::Mod(a, b) => write!(f, "mod({a}, {b})"),
            Expr::Abs(a) => write!(f, "abs({a})"),
            Expr::Min(a, b) => write!(f, "min({a}, {b})"),
            Expr::Max(a, b) => write!(f, "max({a}, {b})"),
            Expr::IfPositive(c, t, e) => write!(f, "ifpos({c}, {t}, {e})"),
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, i64)]) -> Env {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), Rational::from_int(*v)))
            .collect()
    }

    #[test]
    fn eval_weng_hours() {
        // 12 * (50/60) = 10
        let e = Expr::mul(Expr::int(12), Expr::div(Expr::int(50), Expr::int(60)));
        assert_eq!(e.eval(&Env::new()).unwrap(), Rational::from_int(10));
    }

    #[test]
    fn eval_floor_of_product() {
        // floor(0.48 * 49) = floor(23.52) = 23
        let e = Expr::floor(Expr::mul(Expr::rat(48, 100), Expr::int(49)));
        assert_eq!(e.eval(&Env::new()).unwrap(), Rational::from_int(23));
    }

    #[test]
    fn eval_additive_identity() {
        let e = Expr::add(Expr::var("x"), Expr::int(0));
        assert_eq!(e.eval(&env(&[("x", 7)])).unwrap(), Rational::from_int(7));
    }

    #[test]
    fn eval_errors() {
        let e = Expr::var("missing");
        assert_eq!(
            e.eval(&Env::new()),
            Err(EvalError::UnboundVariable("missing".into()))
        );
        let e = Expr::div(Expr::int(1), Expr::sub(Expr::int(2), Expr::int(2)));
        assert!(matches!(e.eval(&Env::new()), Err(EvalError::DivisionByZero(_))));
        let e = Expr::Mod(Box::new(Expr::rat(1, 2)), Box::new(Expr::int(3)));
        assert!(matches!(e.eval(&Env::new()), Err(EvalError::NonIntegerModOperand(_))));
    }

    #[test]
    fn negative_floor_and_mod() {
        assert_eq!(
            Expr::floor(Expr::rat(-7, 2)).eval(&Env::new()).unwrap(),
            Rational::from_int(-4)
        );
        let e = Expr::Mod(Box::new(Expr::int(-7)), Box::new(Expr::int(3)));
        assert_eq!(e.eval(&Env::new()).unwrap(), Rational::from_int(2));
    }

    #[test]
    fn simplify_identities() {
        // (x*1) + 0 => x
        let e = Expr::add(Expr::mul(Expr::var("x"), Expr::int(1)), Expr::int(0));
        assert_eq!(e.simplify(), Expr::var("x"));
        // 2*3 + y => 6 + y
        let e = Expr::add(Expr::mul(Expr::int(2), Expr::int(3)), Expr::var("y"));
        assert_eq!(e.simplify(), Expr::add(Expr::int(6), Expr::var("y")));
        // floor(7/2) => 3
        let e = Expr::floor(Expr::div(Expr::int(7), Expr::int(2)));
        assert_eq!(e.simplify(), Expr::int(3));
    }

    #[test]
    fn simplify_keeps_literal_zero_denominator_intact() {
        let e = Expr::div(Expr::int(1), Expr::sub(Expr::int(2), Expr::int(2)));
        let s = e.simplify();
        assert_eq!(s, e);
        assert_eq!(s.simplify(), s);
    }

    #[test]
    fn node_counts() {
        assert_eq!(Expr::int(5).node_count(), 1);
        assert_eq!(Expr::add(Expr::var("x"), Expr::var("y")).node_count(), 3);
        let e = Expr::floor(Expr::div(Expr::var("x"), Expr::int(2)));
        assert_eq!(e.node_count(), 4);
    }

    #[test]
    fn free_var_sets() {
        assert!(Expr::int(5).free_vars().is_empty());
        let e = Expr::add(Expr::var("x"), Expr::mul(Expr::int(2), Expr::var("y")));
        let vars: Vec<_> = e.free_vars().into_iter().collect();
        assert_eq!(vars, ["x", "y"]);
        let e = Expr::sub(Expr::floor(Expr::var("x")), Expr::var("x"));
        assert_eq!(e.free_vars().len(), 1);
    }
}
