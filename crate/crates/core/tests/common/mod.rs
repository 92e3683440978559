//! Shared generators and the independent brute-force oracle used by the
//! property and acceptance suites.
//!
//! The oracle is deliberately primitive: walk the whole integer box,
//! evaluate everything through `Expr::eval`, and classify the answers. It
//! shares no code with the solver's strategy cascade.

use probgen::dsl::{ConstDecl, Constraint, Domain, Item, LetDecl, Program, RelOp, VarDecl};
use probgen::expr::{Env, Expr};
use probgen::rational::Rational;
use probgen::rng::Rng;
use probgen::solver::{SolveOutcome, Verdict};

/// Verdict classification shared by solver and oracle comparisons.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleVerdict {
    Unique(Rational),
    Multiple,
    NoSolution,
    Error,
}

pub fn classify(outcome: &SolveOutcome) -> OracleVerdict {
    match &outcome.verdict {
        Verdict::Unique { answer, .. } => OracleVerdict::Unique(answer.clone()),
        Verdict::MultipleAnswers { .. } => OracleVerdict::Multiple,
        Verdict::NoSolution => OracleVerdict::NoSolution,
        Verdict::Unsupported(_) | Verdict::BudgetExceeded { .. } => OracleVerdict::Error,
    }
}

/// Exhaustive enumeration over declared integer bounds. Assignments whose
/// lets or constraints fail to evaluate are excluded; an answer evaluation
/// error on a satisfying assignment is an `Error`, matching the solver's
/// contract.
pub fn brute_force(p: &Program) -> OracleVerdict {
    let consts: Env = p
        .consts()
        .map(|c| (c.name.clone(), c.value.clone()))
        .collect();
    let unknowns: Vec<(&str, i64, i64)> = p
        .unknowns()
        .map(|v| {
            let (lo, hi) = v.bounds.as_ref().expect("oracle needs finite bounds");
            (v.name.as_str(), lo.to_i64().unwrap(), hi.to_i64().unwrap())
        })
        .collect();

    let mut answers: Vec<Rational> = Vec::new();
    let mut cursor: Vec<i64> = unknowns.iter().map(|(_, lo, _)| *lo).collect();
    'outer: loop {
        let mut env = consts.clone();
        for ((name, _, _), value) in unknowns.iter().zip(&cursor) {
            env.insert(name.to_string(), Rational::from_int(*value));
        }
        let mut ok = true;
        for l in p.lets() {
            match l.expr.eval(&env) {
                Ok(v) => {
                    env.insert(l.name.clone(), v);
                }
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            for c in p.all_constraints() {
                match (c.lhs.eval(&env), c.rhs.eval(&env)) {
                    (Ok(l), Ok(r)) if c.rel.holds(&l, &r) => {}
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
        }
        if ok {
            match p.answer.eval(&env) {
                Ok(a) => {
                    if !answers.contains(&a) {
                        answers.push(a);
                    }
                    if answers.len() > 1 {
                        return OracleVerdict::Multiple;
                    }
                }
                Err(_) => return OracleVerdict::Error,
            }
        }
        // odometer
        let mut place = cursor.len();
        loop {
            if place == 0 {
                break 'outer;
            }
            place -= 1;
            cursor[place] += 1;
            if cursor[place] <= unknowns[place].2 {
                break;
            }
            cursor[place] = unknowns[place].1;
        }
    }
    match answers.len() {
        0 => OracleVerdict::NoSolution,
        1 => OracleVerdict::Unique(answers[0].clone()),
        _ => OracleVerdict::Multiple,
    }
}

// ---------------------------------------------------------------------------
// program generators

/// A bounded-integer constraint program: up to three unknowns in
/// [-20, 20], up to four constraints mixing affine and product forms.
pub fn random_bounded_int_program(rng: &mut Rng, index: usize) -> Program {
    let n_unknowns = 1 + rng.below(3);
    let mut items = Vec::new();
    let mut names = Vec::new();
    for i in 0..n_unknowns {
        let lo = rng.range_i64(-20, 8);
        let hi = (lo + rng.range_i64(0, 12)).min(20);
        let name = format!("v{i}");
        names.push(name.clone());
        items.push(Item::Var(VarDecl {
            name,
            domain: Domain::Integer,
            bounds: Some((Rational::from_int(lo), Rational::from_int(hi))),
            wheres: vec![],
        }));
    }
    let var = |rng: &mut Rng, names: &[String]| Expr::var(names[rng.below(names.len())].clone());
    let n_constraints = 1 + rng.below(4);
    for _ in 0..n_constraints {
        let lhs = match rng.below(4) {
            // affine combination
            0 => Expr::add(
                Expr::mul(Expr::int(rng.range_i64(1, 4)), var(rng, &names)),
                Expr::mul(Expr::int(rng.range_i64(1, 3)), var(rng, &names)),
            ),
            // product of unknowns
            1 => Expr::mul(var(rng, &names), var(rng, &names)),
            // shifted variable
            2 => Expr::add(var(rng, &names), Expr::int(rng.range_i64(-5, 5))),
            // difference
            _ => Expr::sub(var(rng, &names), var(rng, &names)),
        };
        let rel = match rng.below(6) {
            0 | 1 | 2 => RelOp::Eq,
            3 => RelOp::Le,
            4 => RelOp::Ge,
            _ => RelOp::Ne,
        };
        let rhs = Expr::int(rng.range_i64(-20, 40));
        items.push(Item::Constraint(Constraint::new(lhs, rel, rhs)));
    }
    // answer: affine in the unknowns, sometimes through a let
    let answer_core = Expr::add(
        Expr::mul(Expr::int(rng.range_i64(1, 3)), var(rng, &names)),
        var(rng, &names),
    );
    let answer = if rng.below(3) == 0 {
        items.push(Item::Let(LetDecl {
            name: "total".into(),
            expr: answer_core,
        }));
        Expr::add(Expr::var("total"), Expr::int(rng.range_i64(0, 5)))
    } else {
        answer_core
    };
    let p = Program::new(format!("rand_int_{index}"), items, answer);
    debug_assert!(p.is_valid(), "{:?}", p.validate());
    p
}

/// A straight-line program over exact rationals in the SMT-expressible
/// fragment: divisions only by nonzero constants, floor over fractions of
/// integer terms, mod over guaranteed-integer operands, small powers.
pub fn random_straight_line_program(rng: &mut Rng, index: usize) -> Program {
    let mut items = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut int_names: Vec<String> = Vec::new();
    let n_consts = 1 + rng.below(3);
    for i in 0..n_consts {
        let name = format!("c{i}");
        items.push(Item::Const(ConstDecl {
            name: name.clone(),
            value: Rational::from_int(rng.range_i64(1, 60)),
            unit: None,
            domain: Domain::Integer,
        }));
        names.push(name.clone());
        int_names.push(name);
    }
    let n_lets = rng.below(4);
    for i in 0..n_lets {
        let name = format!("d{i}");
        let expr = random_pocket_expr(rng, &names, &int_names, 2);
        items.push(Item::Let(LetDecl {
            name: name.clone(),
            expr,
        }));
        names.push(name);
    }
    let answer = random_pocket_expr(rng, &names, &int_names, 2);
    let p = Program::new(format!("rand_line_{index}"), items, answer);
    debug_assert!(p.is_valid(), "{:?}", p.validate());
    p
}

/// Expression staying inside the emitter's expressible fragment. `names`
/// may hold fractional-valued derivations; `int_names` are known integer
/// values, the only ones allowed inside mod.
fn random_pocket_expr(rng: &mut Rng, names: &[String], int_names: &[String], depth: u32) -> Expr {
    let leaf = |rng: &mut Rng| {
        if !names.is_empty() && rng.below(2) == 0 {
            Expr::var(names[rng.below(names.len())].clone())
        } else {
            Expr::int(rng.range_i64(1, 30))
        }
    };
    let int_leaf = |rng: &mut Rng| {
        if !int_names.is_empty() && rng.below(2) == 0 {
            Expr::var(int_names[rng.below(int_names.len())].clone())
        } else {
            Expr::int(rng.range_i64(1, 30))
        }
    };
    if depth == 0 {
        return leaf(rng);
    }
    match rng.below(8) {
        0 => Expr::add(
            random_pocket_expr(rng, names, int_names, depth - 1),
            random_pocket_expr(rng, names, int_names, depth - 1),
        ),
        1 => Expr::sub(
            random_pocket_expr(rng, names, int_names, depth - 1),
            random_pocket_expr(rng, names, int_names, depth - 1),
        ),
        2 => Expr::mul(
            random_pocket_expr(rng, names, int_names, depth - 1),
            Expr::int(rng.range_i64(2, 9)),
        ),
        // division by a constant
        3 => Expr::div(
            random_pocket_expr(rng, names, int_names, depth - 1),
            Expr::int(rng.range_i64(2, 9)),
        ),
        // floor of a fraction over integer terms
        4 => Expr::floor(Expr::div(
            Expr::add(int_leaf(rng), Expr::mul(int_leaf(rng), Expr::int(rng.range_i64(1, 4)))),
            Expr::int(rng.range_i64(2, 9)),
        )),
        // mod over guaranteed-integer operands
        5 => {
            let int_arg = Expr::add(
                Expr::mul(int_leaf(rng), Expr::int(rng.range_i64(1, 5))),
                int_leaf(rng),
            );
            Expr::Mod(Box::new(int_arg), Box::new(Expr::int(rng.range_i64(2, 9))))
        }
        6 => Expr::Max(
            Box::new(random_pocket_expr(rng, names, int_names, depth - 1)),
            Box::new(leaf(rng)),
        ),
        _ => leaf(rng),
    }
}

/// A program exercising the full grammar for print/parse round-trips:
/// units, fraction and decimal constants, where clauses, the whole
/// operator set, and metadata.
pub fn random_grammar_program(rng: &mut Rng, index: usize) -> Program {
    let mut items = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for i in 0..(1 + rng.below(3)) {
        let name = format!("k{i}");
        let value = match rng.below(3) {
            0 => Rational::from_int(rng.range_i64(-20, 90)),
            1 => Rational::from_frac(rng.range_i64(1, 30), rng.range_i64(2, 9)),
            _ => Rational::parse(&format!("{}.{:02}", rng.range_i64(0, 20), rng.below(100))).unwrap(),
        };
        items.push(Item::Const(ConstDecl {
            name: name.clone(),
            domain: if value.is_integer() {
                Domain::Integer
            } else {
                Domain::Rational
            },
            unit: (rng.below(3) == 0).then(|| "kg".to_string()),
            value,
        }));
        names.push(name);
    }
    for i in 0..rng.below(3) {
        let name = format!("u{i}");
        let bounds = (rng.below(2) == 0).then(|| {
            let lo = rng.range_i64(0, 5);
            (Rational::from_int(lo), Rational::from_int(lo + rng.range_i64(1, 20)))
        });
        let mut wheres = vec![];
        if rng.below(2) == 0 {
            wheres.push(Constraint::new(
                Expr::var(name.clone()),
                RelOp::Gt,
                Expr::int(0),
            ));
        }
        items.push(Item::Var(VarDecl {
            name: name.clone(),
            domain: if rng.below(4) == 0 {
                Domain::Rational
            } else {
                Domain::Integer
            },
            bounds,
            wheres,
        }));
        names.push(name);
    }
    for i in 0..rng.below(4) {
        let name = format!("l{i}");
        let expr = random_any_expr(rng, &names, 3);
        items.push(Item::Let(LetDecl {
            name: name.clone(),
            expr,
        }));
        names.push(name);
    }
    for _ in 0..rng.below(3) {
        let rel = [RelOp::Eq, RelOp::Ne, RelOp::Lt, RelOp::Le, RelOp::Gt, RelOp::Ge]
            [rng.below(6)];
        items.push(Item::Constraint(Constraint::new(
            random_any_expr(rng, &names, 2),
            rel,
            random_any_expr(rng, &names, 2),
        )));
    }
    let answer = random_any_expr(rng, &names, 3);
    let mut p = Program::new(format!("rand_gram_{index}"), items, answer);
    if rng.below(2) == 0 {
        p.meta.insert("origin".into(), format!("generator {index}"));
    }
    debug_assert!(p.is_valid(), "{:?}", p.validate());
    p
}

/// Any-operator expression tree. Divisions never place a bare constant on
/// the right (the parser folds constant fractions), and denominators are
/// nonzero literals wrapped in arithmetic.
pub fn random_any_expr(rng: &mut Rng, names: &[String], depth: u32) -> Expr {
    let leaf = |rng: &mut Rng| -> Expr {
        if !names.is_empty() && rng.below(3) < 2 {
            Expr::var(names[rng.below(names.len())].clone())
        } else if rng.below(4) == 0 {
            Expr::rat(rng.range_i64(-9, 9).max(1), rng.range_i64(2, 7))
        } else {
            Expr::int(rng.range_i64(-30, 30))
        }
    };
    if depth == 0 {
        return leaf(rng);
    }
    let sub = |rng: &mut Rng| random_any_expr(rng, names, depth - 1);
    match rng.below(12) {
        0 => Expr::add(sub(rng), sub(rng)),
        1 => Expr::sub(sub(rng), sub(rng)),
        2 => Expr::mul(sub(rng), sub(rng)),
        3 => {
            // divisor: a variable when one exists, else a compound that is
            // not a literal constant pair
            let denominator = if !names.is_empty() {
                Expr::var(names[rng.below(names.len())].clone())
            } else {
                Expr::add(Expr::int(rng.range_i64(1, 9)), Expr::int(1))
            };
            Expr::div(sub(rng), denominator)
        }
        4 => Expr::Pow(Box::new(sub(rng)), rng.below(4) as u32),
        5 => Expr::floor(sub(rng)),
        6 => Expr::Mod(Box::new(sub(rng)), Box::new(Expr::int(rng.range_i64(2, 9)))),
        7 => Expr::Abs(Box::new(sub(rng))),
        8 => Expr::Min(Box::new(sub(rng)), Box::new(sub(rng))),
        9 => Expr::Max(Box::new(sub(rng)), Box::new(sub(rng))),
        10 => Expr::IfPositive(Box::new(sub(rng)), Box::new(sub(rng)), Box::new(sub(rng))),
        _ => leaf(rng),
    }
}
