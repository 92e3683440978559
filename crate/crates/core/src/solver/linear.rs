//! Affine and polynomial normal forms over program unknowns, plus exact
//! Gaussian elimination.
//!
//! Lets are inlined during extraction, so a constraint like
//! `second_rate == 2 * base_rate - 1` normalizes to coefficients over the
//! declared unknowns alone. Extraction returns `None` whenever a construct
//! is not affine (or not polynomial) in the unknowns.

use crate::dsl::Program;
use crate::expr::{Env, Expr};
use crate::rational::Rational;
use std::collections::BTreeMap;

/// `constant + sum(coeffs[v] * v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinForm {
    pub constant: Rational,
    pub coeffs: BTreeMap<String, Rational>,
}

impl LinForm {
    pub fn constant(value: Rational) -> Self {
        LinForm {
            constant: value,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn var(name: &str) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(name.to_string(), Rational::one());
        LinForm {
            constant: Rational::zero(),
            coeffs,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.values().all(|c| c.is_zero())
    }

    pub fn add(&self, other: &LinForm) -> LinForm {
        let mut out = self.clone();
        out.constant = &out.constant + &other.constant;
        for (v, c) in &other.coeffs {
            let entry = out.coeffs.entry(v.clone()).or_insert_with(Rational::zero);
            *entry = &*entry + c;
        }
        out
    }

    pub fn sub(&self, other: &LinForm) -> LinForm {
        self.add(&other.scale(&-Rational::one()))
    }

    pub fn scale(&self, k: &Rational) -> LinForm {
        LinForm {
            constant: &self.constant * k,
            coeffs: self.coeffs.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
        }
    }

    pub fn coeff(&self, var: &str) -> Rational {
        self.coeffs.get(var).cloned().unwrap_or_else(Rational::zero)
    }
}

/// Extracts an affine form of `e` over the program's unknowns, inlining
/// lets. `consts` must already bind every declared constant.
pub fn affine_of(e: &Expr, p: &Program, consts: &Env) -> Option<LinForm> {
    let lets: BTreeMap<&str, &Expr> = p.lets().map(|l| (l.name.as_str(), &l.expr)).collect();
    affine_rec(e, consts, &lets, 0)
}

fn affine_rec(
    e: &Expr,
    consts: &Env,
    lets: &BTreeMap<&str, &Expr>,
    depth: u32,
) -> Option<LinForm> {
    if depth > 64 {
        return None;
    }
    match e {
        Expr::Const(c) => Some(LinForm::constant(c.clone())),
        Expr::Var(v) => {
            if let Some(value) = consts.get(v) {
                Some(LinForm::constant(value.clone()))
            } else if let Some(body) = lets.get(v.as_str()) {
                affine_rec(body, consts, lets, depth + 1)
            } else {
                Some(LinForm::var(v))
            }
        }
        Expr::Add(a, b) => Some(
            affine_rec(a, consts, lets, depth + 1)?.add(&affine_rec(b, consts, lets, depth + 1)?),
        ),
        Expr::Sub(a, b) => Some(
            affine_rec(a, consts, lets, depth + 1)?.sub(&affine_rec(b, consts, lets, depth + 1)?),
        ),
        Expr::Mul(a, b) => {
            let a = affine_rec(a, consts, lets, depth + 1)?;
            let b = affine_rec(b, consts, lets, depth + 1)?;
            if a.is_constant() {
                Some(b.scale(&a.constant))
            } else if b.is_constant() {
                Some(a.scale(&b.constant))
            } else {
                None
            }
        }
        Expr::Div(a, b) => {
            let b = affine_rec(b, consts, lets, depth + 1)?;
            if b.is_constant() && !b.constant.is_zero() {
                let a = affine_rec(a, consts, lets, depth + 1)?;
                Some(a.scale(&(Rational::one() / b.constant)))
            } else {
                None
            }
        }
        Expr::Pow(a, k) => {
            let a = affine_rec(a, consts, lets, depth + 1)?;
            match k {
                0 => Some(LinForm::constant(Rational::one())),
                1 => Some(a),
                _ if a.is_constant() => Some(LinForm::constant(a.constant.pow(*k))),
                _ => None,
            }
        }
        // nonlinear in general; allowed only on constant arguments
        Expr::Floor(a) => {
            let a = affine_rec(a, consts, lets, depth + 1)?;
            a.is_constant().then(|| LinForm::constant(a.constant.floor()))
        }
        Expr::Abs(a) => {
            let a = affine_rec(a, consts, lets, depth + 1)?;
            a.is_constant().then(|| LinForm::constant(a.constant.abs()))
        }
        Expr::Mod(a, m) => {
            let a = affine_rec(a, consts, lets, depth + 1)?;
            let m = affine_rec(m, consts, lets, depth + 1)?;
            if a.is_constant() && m.is_constant() {
                a.constant.mod_euclid(&m.constant).map(LinForm::constant)
            } else {
                None
            }
        }
        Expr::Min(a, b) | Expr::Max(a, b) => {
            let fa = affine_rec(a, consts, lets, depth + 1)?;
            let fb = affine_rec(b, consts, lets, depth + 1)?;
            if fa.is_constant() && fb.is_constant() {
                let pick_min = matches!(e, Expr::Min(_, _));
                let v = if (fa.constant <= fb.constant) == pick_min {
                    fa.constant
                } else {
                    fb.constant
                };
                Some(LinForm::constant(v))
            } else {
                None
            }
        }
        Expr::IfPositive(c, t, f) => {
            let cond = affine_rec(c, consts, lets, depth + 1)?;
            if cond.is_constant() {
                let branch = if cond.constant.is_positive() { t } else { f };
                affine_rec(branch, consts, lets, depth + 1)
            } else {
                None
            }
        }
    }
}

/// Univariate polynomial: exponent -> coefficient.
#[derive(Clone, Debug)]
pub struct Poly {
    pub coeffs: BTreeMap<u32, Rational>,
}

impl Poly {
    fn constant(v: Rational) -> Self {
        let mut coeffs = BTreeMap::new();
        if !v.is_zero() {
            coeffs.insert(0, v);
        }
        Poly { coeffs }
    }

    fn var() -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(1, Rational::one());
        Poly { coeffs }
    }

    pub fn degree(&self) -> u32 {
        self.coeffs
            .iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, _)| *k)
            .max()
            .unwrap_or(0)
    }

    pub fn coeff(&self, k: u32) -> Rational {
        self.coeffs.get(&k).cloned().unwrap_or_else(Rational::zero)
    }

    fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (k, c) in &other.coeffs {
            let e = out.coeffs.entry(*k).or_insert_with(Rational::zero);
            *e = &*e + c;
        }
        out
    }

    fn neg(&self) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|(k, c)| (*k, -c)).collect(),
        }
    }

    fn mul(&self, other: &Poly) -> Option<Poly> {
        let mut out = Poly::constant(Rational::zero());
        for (ka, ca) in &self.coeffs {
            for (kb, cb) in &other.coeffs {
                let k = ka.checked_add(*kb)?;
                if k > 8 {
                    return None;
                }
                let e = out.coeffs.entry(k).or_insert_with(Rational::zero);
                *e = &*e + &(ca * cb);
            }
        }
        Some(out)
    }

    fn as_constant(&self) -> Option<Rational> {
        if self.degree() == 0 {
            Some(self.coeff(0))
        } else {
            None
        }
    }
}

/// Polynomial extraction in a single unknown `var`, inlining lets.
pub fn poly_of(e: &Expr, var: &str, p: &Program, consts: &Env) -> Option<Poly> {
    let lets: BTreeMap<&str, &Expr> = p.lets().map(|l| (l.name.as_str(), &l.expr)).collect();
    poly_rec(e, var, consts, &lets, 0)
}

fn poly_rec(
    e: &Expr,
    var: &str,
    consts: &Env,
    lets: &BTreeMap<&str, &Expr>,
    depth: u32,
) -> Option<Poly> {
    if depth > 64 {
        return None;
    }
    match e {
        Expr::Const(c) => Some(Poly::constant(c.clone())),
        Expr::Var(v) => {
            if v == var {
                Some(Poly::var())
            } else if let Some(value) = consts.get(v) {
                Some(Poly::constant(value.clone()))
            } else if let Some(body) = lets.get(v.as_str()) {
                poly_rec(body, var, consts, lets, depth + 1)
            } else {
                None
            }
        }
        Expr::Add(a, b) => Some(
            poly_rec(a, var, consts, lets, depth + 1)?.add(&poly_rec(b, var, consts, lets, depth + 1)?),
        ),
        Expr::Sub(a, b) => Some(
            poly_rec(a, var, consts, lets, depth + 1)?
                .add(&poly_rec(b, var, consts, lets, depth + 1)?.neg()),
        ),
        Expr::Mul(a, b) => poly_rec(a, var, consts, lets, depth + 1)?
            .mul(&poly_rec(b, var, consts, lets, depth + 1)?),
        Expr::Div(a, b) => {
            let b = poly_rec(b, var, consts, lets, depth + 1)?;
            let k = b.as_constant()?;
            if k.is_zero() {
                return None;
            }
            let a = poly_rec(a, var, consts, lets, depth + 1)?;
            Some(Poly {
                coeffs: a
                    .coeffs
                    .iter()
                    .map(|(d, c)| (*d, c / &k))
                    .collect(),
            })
        }
        Expr::Pow(a, k) => {
            let base = poly_rec(a, var, consts, lets, depth + 1)?;
            let mut out = Poly::constant(Rational::one());
            for _ in 0..*k {
                out = out.mul(&base)?;
            }
            Some(out)
        }
        // nonpolynomial constructs fold only when their argument is constant
        _ => {
            let sub = |x: &Expr| poly_rec(x, var, consts, lets, depth + 1)?.as_constant();
            match e {
                Expr::Floor(a) => Some(Poly::constant(sub(a)?.floor())),
                Expr::Abs(a) => Some(Poly::constant(sub(a)?.abs())),
                Expr::Mod(a, m) => sub(a)?.mod_euclid(&sub(m)?).map(Poly::constant),
                Expr::Min(a, b) => {
                    let (a, b) = (sub(a)?, sub(b)?);
                    Some(Poly::constant(if a <= b { a } else { b }))
                }
                Expr::Max(a, b) => {
                    let (a, b) = (sub(a)?, sub(b)?);
                    Some(Poly::constant(if a >= b { a } else { b }))
                }
                Expr::IfPositive(c, t, f) => {
                    let c = sub(c)?;
                    poly_rec(if c.is_positive() { t } else { f }, var, consts, lets, depth + 1)
                }
                _ => unreachable!(),
            }
        }
    }
}

/// Outcome of eliminating a square-or-rectangular affine system.
pub enum Elimination {
    /// One assignment satisfies every equation.
    Unique(BTreeMap<String, Rational>),
    /// The system admits no assignment.
    Inconsistent,
    /// Fewer independent equations than variables.
    Underdetermined,
}

/// Exact Gaussian elimination for `forms[i] = 0` over `vars`.
#[allow(clippy::needless_range_loop)]
pub fn eliminate(vars: &[String], forms: &[LinForm]) -> Elimination {
    let n = vars.len();
    // rows: coefficients for each var then the negated constant (rhs)
    let mut rows: Vec<Vec<Rational>> = forms
        .iter()
        .map(|f| {
            let mut row: Vec<Rational> = vars.iter().map(|v| f.coeff(v)).collect();
            row.push(-f.constant.clone());
            row
        })
        .collect();

    let mut pivot_row = 0usize;
    let mut pivot_cols = Vec::new();
    for col in 0..n {
        let Some(r) = (pivot_row..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(pivot_row, r);
        let inv = Rational::one() / rows[pivot_row][col].clone();
        for v in rows[pivot_row].iter_mut() {
            *v = &*v * &inv;
        }
        for r in 0..rows.len() {
            if r != pivot_row && !rows[r][col].is_zero() {
                let factor = rows[r][col].clone();
                for c in 0..=n {
                    let delta = &factor * &rows[pivot_row][c];
                    rows[r][c] = &rows[r][c] - &delta;
                }
            }
        }
        pivot_cols.push(col);
        pivot_row += 1;
        if pivot_row == rows.len() {
            break;
        }
    }

    // rows past the pivots must be all-zero, else 0 = nonzero
    for r in pivot_row..rows.len() {
        if rows[r][..n].iter().all(Rational::is_zero) && !rows[r][n].is_zero() {
            return Elimination::Inconsistent;
        }
    }
    if pivot_cols.len() < n {
        return Elimination::Underdetermined;
    }
    let mut solution = BTreeMap::new();
    for (row, col) in pivot_cols.iter().enumerate() {
        solution.insert(vars[*col].clone(), rows[row][n].clone());
    }
    Elimination::Unique(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;

    #[test]
    fn affine_inlines_lets() {
        let p = parse_program(
            r#"problem "p" {
                 const k: int = 3;
                 var x: int;
                 let y = 2 * x + k;
                 answer = y + x;
               }"#,
        )
        .unwrap();
        let consts: Env = p
            .consts()
            .map(|c| (c.name.clone(), c.value.clone()))
            .collect();
        let form = affine_of(&p.answer, &p, &consts).unwrap();
        assert_eq!(form.coeff("x"), Rational::from_int(3));
        assert_eq!(form.constant, Rational::from_int(3));
    }

    #[test]
    fn product_of_unknowns_is_not_affine() {
        let p = parse_program(
            r#"problem "p" {
                 var x: int;
                 var y: int;
                 answer = x * y;
               }"#,
        )
        .unwrap();
        assert!(affine_of(&p.answer, &p, &Env::new()).is_none());
    }

    #[test]
    fn eliminate_unique_system() {
        // x + y = 10, x - y = 4  =>  x = 7, y = 3
        let vars = vec!["x".to_string(), "y".to_string()];
        let mut f1 = LinForm::var("x").add(&LinForm::var("y"));
        f1.constant = Rational::from_int(-10);
        let mut f2 = LinForm::var("x").sub(&LinForm::var("y"));
        f2.constant = Rational::from_int(-4);
        match eliminate(&vars, &[f1, f2]) {
            Elimination::Unique(sol) => {
                assert_eq!(sol["x"], Rational::from_int(7));
                assert_eq!(sol["y"], Rational::from_int(3));
            }
            _ => panic!("expected unique"),
        }
    }

    #[test]
    fn eliminate_detects_inconsistency_and_freedom() {
        let vars = vec!["x".to_string()];
        let mut f1 = LinForm::var("x");
        f1.constant = Rational::from_int(-1);
        let mut f2 = LinForm::var("x");
        f2.constant = Rational::from_int(-2);
        assert!(matches!(
            eliminate(&vars, &[f1.clone(), f2]),
            Elimination::Inconsistent
        ));
        let vars = vec!["x".to_string(), "y".to_string()];
        assert!(matches!(
            eliminate(&vars, &[f1]),
            Elimination::Underdetermined
        ));
    }

    #[test]
    fn quadratic_extraction() {
        let p = parse_program(
            r#"problem "p" {
                 var a: int;
                 let b = 2 * a - 1;
                 constraint a * b == 120;
                 answer = a;
               }"#,
        )
        .unwrap();
        let c = p.constraints().next().unwrap();
        let lhs = poly_of(&c.lhs, "a", &p, &Env::new()).unwrap();
        assert_eq!(lhs.degree(), 2);
        assert_eq!(lhs.coeff(2), Rational::from_int(2));
        assert_eq!(lhs.coeff(1), Rational::from_int(-1));
    }
}
