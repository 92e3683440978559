//! Property tests for the expression core, the problem language, and the
//! mutation layer.

mod common;

use common::{random_any_expr, random_grammar_program};
use num_bigint::BigInt;
use num_integer::Integer;
use probgen::dsl::{parse_program, print_program};
use probgen::expr::{Env, Expr};
use probgen::mutate::{mutate, MutationKind, MutationPolicy};
use probgen::rational::Rational;
use probgen::rng::Rng;
use probgen::solver::{solve, SolveBudget};
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// expression core

fn arb_rational() -> impl Strategy<Value = Rational> {
    (-50i64..50, 1i64..12).prop_map(|(n, d)| Rational::from_frac(n, d))
}

fn arb_expr(vars: &'static [&'static str]) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        arb_rational().prop_map(Expr::Const),
        proptest::sample::select(vars).prop_map(Expr::var),
    ];
    leaf.prop_recursive(6, 64, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::div(a, b)),
            (inner.clone(), 0u32..4).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
            inner.clone().prop_map(Expr::floor),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Mod(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expr::Abs(Box::new(a))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Min(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Max(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone(), inner).prop_map(|(c, t, e)| Expr::IfPositive(
                Box::new(c),
                Box::new(t),
                Box::new(e)
            )),
        ]
    })
}

const VARS: &[&str] = &["x", "y", "z"];

proptest! {
    /// Simplification preserves value whenever the original evaluates.
    #[test]
    fn simplify_preserves_defined_values(
        e in arb_expr(VARS),
        xv in arb_rational(),
        yv in arb_rational(),
        zv in arb_rational(),
    ) {
        let env: Env = [("x", xv), ("y", yv), ("z", zv)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        if let Ok(value) = e.eval(&env) {
            let s = e.simplify();
            prop_assert_eq!(s.eval(&env).unwrap(), value);
        }
    }

    /// Simplification is idempotent and never grows the tree.
    #[test]
    fn simplify_idempotent_and_shrinking(e in arb_expr(VARS)) {
        let once = e.simplify();
        prop_assert!(once.node_count() <= e.node_count());
        prop_assert_eq!(once.simplify(), once);
    }
}

/// Exact arithmetic matches an independent big-integer computation on ten
/// thousand random operand pairs: cross-multiplied sums and products,
/// reduced by a hand-rolled gcd.
#[test]
fn rational_arithmetic_matches_bigint_oracle() {
    fn gcd(mut a: BigInt, mut b: BigInt) -> BigInt {
        use num_traits::Zero;
        while !b.is_zero() {
            let r = a.mod_floor(&b);
            a = b;
            b = r;
        }
        a
    }
    let reduced = |n: BigInt, d: BigInt| -> (BigInt, BigInt) {
        use num_traits::Signed;
        let g = gcd(n.abs(), d.abs());
        let sign = if d < BigInt::from(0) { -1 } else { 1 };
        (n * sign / &g, d.abs() / g)
    };
    let mut rng = Rng::new(0xfeed);
    for _ in 0..10_000 {
        let (an, ad) = (rng.range_i64(-1000, 1000), rng.range_i64(1, 500));
        let (bn, bd) = (rng.range_i64(-1000, 1000), rng.range_i64(1, 500));
        let a = Rational::from_frac(an, ad);
        let b = Rational::from_frac(bn, bd);

        let (sn, sd) = reduced(
            BigInt::from(an) * BigInt::from(bd) + BigInt::from(bn) * BigInt::from(ad),
            BigInt::from(ad) * BigInt::from(bd),
        );
        let sum = &a + &b;
        assert_eq!((sum.numer().clone(), sum.denom().clone()), (sn, sd));

        let (pn, pd) = reduced(
            BigInt::from(an) * BigInt::from(bn),
            BigInt::from(ad) * BigInt::from(bd),
        );
        let product = &a * &b;
        assert_eq!((product.numer().clone(), product.denom().clone()), (pn, pd));
    }
}

// ---------------------------------------------------------------------------
// problem language

/// Printing then parsing reproduces the program exactly, and the size
/// measure is formatting-independent, on five hundred generated programs.
#[test]
fn print_parse_identity_on_500_programs() {
    let mut rng = Rng::new(0xda7a);
    for i in 0..500 {
        let p = random_grammar_program(&mut rng, i);
        let printed = print_program(&p);
        let reparsed = parse_program(&printed)
            .unwrap_or_else(|e| panic!("reparse failed for {}: {e}\n{printed}", p.id));
        assert_eq!(reparsed, p, "round trip mismatch\n{printed}");
        assert_eq!(reparsed.size(), p.size());
        // printing is deterministic
        assert_eq!(print_program(&reparsed), printed);
    }
}

/// Whitespace and comments cannot move the size measure.
#[test]
fn size_is_format_independent() {
    let compact = parse_program(
        "problem \"p\" { const a: int = 4; let b = a * 3; answer = b - 1; }",
    )
    .unwrap();
    let airy = parse_program(
        "problem \"p\" {\n  // a note\n  const a: int    = 4;\n\n  let b =   a * 3;\n  answer =\n    b - 1;\n}",
    )
    .unwrap();
    assert_eq!(compact.size(), airy.size());
}

/// Expression display and DSL expression syntax agree through the parser.
#[test]
fn random_expressions_roundtrip_through_program_text() {
    let mut rng = Rng::new(0xe59);
    let names = vec!["a".to_string()];
    for i in 0..300 {
        let e = random_any_expr(&mut rng, &names, 3);
        let p = probgen::dsl::Program::new(
            format!("e{i}"),
            vec![probgen::dsl::Item::Const(probgen::dsl::ConstDecl {
                name: "a".into(),
                value: Rational::from_int(3),
                unit: None,
                domain: probgen::dsl::Domain::Integer,
            })],
            e,
        );
        let printed = print_program(&p);
        let reparsed = parse_program(&printed).unwrap_or_else(|err| {
            panic!("{err}\n{printed}");
        });
        assert_eq!(reparsed.answer, p.answer, "\n{printed}");
    }
}

// ---------------------------------------------------------------------------
// mutation layer

/// Every mutation result is structurally valid; results that did not fall
/// back pass all three guardrails; the theme-only operator never touches
/// the mathematics.
#[test]
fn mutation_results_valid_and_guarded() {
    let fixtures = probgen::fixtures::all_programs();
    let mut checked = 0;
    for p in &fixtures {
        for seed in 0..40u64 {
            let policy = MutationPolicy {
                chain_depth: 1 + (seed % 3) as u32,
                ..MutationPolicy::uniform(seed)
            };
            let result = mutate(p, &policy);
            assert!(result.program.is_valid(), "{}: invalid program", p.id);
            if !result.fallback {
                assert!(
                    result.guardrails.passes(),
                    "{}: non-fallback failing guardrails at seed {seed}",
                    p.id
                );
            }
            checked += 1;
        }
    }
    assert_eq!(checked, fixtures.len() * 40);
}

#[test]
fn theme_only_has_identical_solve_outcome() {
    for p in probgen::fixtures::all_programs() {
        let result = mutate(&p, &MutationPolicy::single(MutationKind::ThemeOnly, 3));
        assert_eq!(
            solve(&result.program, SolveBudget::default()),
            solve(&p, SolveBudget::default()),
            "{}",
            p.id
        );
    }
}

/// Chaining adds exactly one derivation step each time it applies.
#[test]
fn chain_increases_step_count_by_one() {
    for p in probgen::fixtures::all_programs() {
        for seed in 0..20u64 {
            let result = mutate(&p, &MutationPolicy::single(MutationKind::ChainIntermediate, seed));
            if !result.fallback {
                assert_eq!(
                    result.program.step_count(),
                    p.step_count() + 1,
                    "{} seed {seed}",
                    p.id
                );
            }
        }
    }
}
