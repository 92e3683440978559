//! Acceptance suite: one test per release criterion, each printing a
//! pass line with its measured numbers (run with `--nocapture` to see
//! them). Tolerances and thresholds are pinned in the assertions.

mod common;

use common::{brute_force, classify, random_bounded_int_program, random_straight_line_program};
use probgen::clients::StudentProfile;
use probgen::dsl::{parse_program, print_program, Item, Program};
use probgen::fixtures;
use probgen::mutate::{mutate, MutationPolicy};
use probgen::optim::{run_loop, LoopConfig, LoopEnv};
use probgen::pipeline::{
    diversity_report, filter_dataset, generate_dataset, FilterStatus, SeedRecord, VariantMode,
};
use probgen::rational::Rational;
use probgen::render::ThemeLexicon;
use probgen::rng::Rng;
use probgen::smt::{emit_smt, parse_smt, same_outcome};
use probgen::solver::{check_guardrails, solve, SolveBudget, Verdict};
use std::time::Instant;

/// 1. Reference problems solve to their exact frozen answers.
#[test]
fn criterion_1_reference_fixture_exactness() {
    let start = Instant::now();
    let budget = SolveBudget::default();

    let expectations: &[(&str, Rational)] = &[
        ("natalia", Rational::from_int(72)),
        ("weng", Rational::from_int(10)),
        ("liza", Rational::from_int(2)),
        ("monster", Rational::from_int(121)),
        ("tanks", Rational::from_int(40)),
        ("contractor", Rational::from_frac(83, 6)),
        ("widgets", Rational::from_int(120)),
    ];
    for ((name, src), (ename, expected)) in fixtures::DSL_FIXTURES.iter().zip(expectations) {
        assert_eq!(name, ename);
        let p = parse_program(src).unwrap();
        let out = solve(&p, budget);
        assert_eq!(out.answer(), Some(expected), "{name}");
    }

    let novel = parse_smt(fixtures::SMT_NOVEL).unwrap();
    assert_eq!(solve(&novel, budget).answer(), Some(&Rational::from_int(72)));
    let wallet = parse_smt(fixtures::SMT_WALLET).unwrap();
    assert_eq!(solve(&wallet, budget).answer(), Some(&Rational::from_int(3)));

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("criterion 1 (reference fixture exactness): PASS in {elapsed:?}");
}

/// 2. Solver verdict and answer match exhaustive enumeration on one
/// thousand random bounded-integer programs.
#[test]
fn criterion_2_solver_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = Rng::new(0x0bace);
    let budget = SolveBudget::default();
    let mut agree = 0usize;
    for i in 0..1000 {
        let p = random_bounded_int_program(&mut rng, i);
        let ours = classify(&solve(&p, budget));
        let oracle = brute_force(&p);
        assert_eq!(ours, oracle, "disagreement on:\n{}", print_program(&p));
        agree += 1;
    }
    let elapsed = start.elapsed();
    assert_eq!(agree, 1000);
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!("criterion 2 (solver-oracle equivalence 1000/1000): PASS in {elapsed:?}");
}

/// 3. Solve outcomes survive the emit -> print -> parse round trip on all
/// fixtures and three hundred generated expressible programs.
#[test]
fn criterion_3_smt_semantic_roundtrip() {
    let start = Instant::now();
    let budget = SolveBudget::default();
    let mut checked = 0usize;

    let mut check = |p: &Program| {
        let script = emit_smt(p).unwrap_or_else(|e| panic!("{}: emit failed: {e}", p.id));
        let text = script.to_text();
        let back = parse_smt(&text).unwrap_or_else(|e| panic!("{}: parse failed: {e}\n{text}", p.id));
        let direct = solve(p, budget);
        let via_smt = solve(&back, budget);
        assert!(
            same_outcome(&direct.verdict, &via_smt.verdict),
            "{}: {:?} vs {:?}\n{text}",
            p.id,
            direct.verdict,
            via_smt.verdict
        );
        checked += 1;
    };

    for p in fixtures::all_programs() {
        check(&p);
    }
    for p in fixtures::seed_batch() {
        check(&p);
    }
    let mut rng = Rng::new(0x5317);
    for i in 0..150 {
        check(&random_straight_line_program(&mut rng, i));
    }
    for i in 0..150 {
        check(&random_bounded_int_program(&mut rng, i));
    }

    let elapsed = start.elapsed();
    println!("criterion 3 (SMT semantic round-trip, {checked} programs): PASS in {elapsed:?}");
}

/// 4. Across five hundred seeded mutations per fixture, every non-fallback
/// result passes all three guardrails, and injected violations are
/// rejected without exception.
#[test]
fn criterion_4_guardrail_enforcement() {
    let start = Instant::now();
    let budget = SolveBudget::default();
    let mut non_fallback = 0usize;
    let mut total = 0usize;
    for p in fixtures::all_programs() {
        for seed in 0..500u64 {
            let policy = MutationPolicy {
                chain_depth: 1 + (seed % 4) as u32,
                ..MutationPolicy::uniform(seed)
            };
            let result = mutate(&p, &policy);
            total += 1;
            assert!(result.program.is_valid(), "{} seed {seed}", p.id);
            if !result.fallback {
                non_fallback += 1;
                assert!(
                    result.guardrails.passes(),
                    "{} seed {seed}: non-fallback violating guardrails",
                    p.id
                );
            }
        }
    }

    // injected violation: doubling a program must trip the size check
    let mut rejected = 0usize;
    for p in fixtures::all_programs() {
        let doubled = duplicate_program(&p);
        let ratio = probgen::dsl::size_ratio(&p, &doubled);
        assert!(ratio >= Rational::from_frac(19, 10), "{}: ratio {ratio}", p.id);
        let report = check_guardrails(&p, &doubled, budget);
        assert!(!report.size_ok, "{}: duplication not rejected", p.id);
        rejected += 1;

        // injected violation: a constraint over an undeclared variable
        let mut dangling = p.clone();
        dangling.items.push(Item::Constraint(probgen::dsl::Constraint::new(
            probgen::expr::Expr::var("ghost"),
            probgen::dsl::RelOp::Eq,
            probgen::expr::Expr::int(1),
        )));
        assert!(!dangling.is_valid(), "{}: free variable not rejected", p.id);
        let report = check_guardrails(&p, &dangling, budget);
        assert!(!report.executes, "{}: invalid program reported as executing", p.id);
        rejected += 1;
    }

    let elapsed = start.elapsed();
    println!(
        "criterion 4 (guardrails: {non_fallback}/{total} non-fallback all pass, {rejected} injected violations rejected): PASS in {elapsed:?}"
    );
}

/// Two copies of the problem in one program: every declaration is cloned
/// under a renamed identity and the answer doubles up, so the size ratio
/// lands at two.
fn duplicate_program(p: &Program) -> Program {
    let mut doubled = p.clone();
    let rename = |name: &str| format!("{name}_copy");
    let mut renamed_answer = p.answer.clone();
    let mut copies: Vec<Item> = Vec::new();
    for item in &p.items {
        match item {
            Item::Const(c) => {
                let mut copy = c.clone();
                copy.name = rename(&c.name);
                renamed_answer =
                    renamed_answer.substitute(&c.name, &probgen::expr::Expr::var(copy.name.clone()));
                copies.push(Item::Const(copy));
            }
            Item::Let(l) => {
                let mut expr = l.expr.clone();
                for prior in &p.items {
                    if let Some(name) = match prior {
                        Item::Const(c) => Some(&c.name),
                        Item::Let(l) => Some(&l.name),
                        Item::Var(v) => Some(&v.name),
                        Item::Constraint(_) => None,
                    } {
                        expr = expr.substitute(name, &probgen::expr::Expr::var(rename(name)));
                    }
                }
                let name = rename(&l.name);
                renamed_answer =
                    renamed_answer.substitute(&l.name, &probgen::expr::Expr::var(name.clone()));
                copies.push(Item::Let(probgen::dsl::LetDecl { name, expr }));
            }
            Item::Var(v) => {
                let mut copy = v.clone();
                copy.name = rename(&v.name);
                copy.wheres = v
                    .wheres
                    .iter()
                    .map(|w| {
                        probgen::dsl::Constraint::new(
                            w.lhs.substitute(&v.name, &probgen::expr::Expr::var(copy.name.clone())),
                            w.rel,
                            w.rhs.substitute(&v.name, &probgen::expr::Expr::var(copy.name.clone())),
                        )
                    })
                    .collect();
                renamed_answer =
                    renamed_answer.substitute(&v.name, &probgen::expr::Expr::var(copy.name.clone()));
                copies.push(Item::Var(copy));
            }
            Item::Constraint(c) => {
                let mut lhs = c.lhs.clone();
                let mut rhs = c.rhs.clone();
                for prior in &p.items {
                    if let Some(name) = match prior {
                        Item::Const(c) => Some(&c.name),
                        Item::Let(l) => Some(&l.name),
                        Item::Var(v) => Some(&v.name),
                        Item::Constraint(_) => None,
                    } {
                        let replacement = probgen::expr::Expr::var(rename(name));
                        lhs = lhs.substitute(name, &replacement);
                        rhs = rhs.substitute(name, &replacement);
                    }
                }
                copies.push(Item::Constraint(probgen::dsl::Constraint::new(lhs, c.rel, rhs)));
            }
        }
    }
    doubled.items.extend(copies);
    doubled.answer = probgen::expr::Expr::add(p.answer.clone(), renamed_answer);
    doubled
}

/// 5. The closed loop drives the weak student below a 30% pass rate
/// within ten iterations, with guardrail pass rates at or above 90%, for
/// every run seed in 1..=5.
#[test]
fn criterion_5_closed_loop_effectiveness() {
    let seeds = fixtures::seed_batch();
    assert_eq!(seeds.len(), 16);
    let student = StudentProfile::depth2_no_product();
    let lexicon = ThemeLexicon::builtin();
    let target = Rational::from_frac(3, 10);
    let guard_floor = Rational::from_frac(9, 10);

    for run_seed in 1..=5u64 {
        let start = Instant::now();
        let config = LoopConfig {
            max_iterations: 10,
            batch_size: seeds.len(),
            ..LoopConfig::default()
        };
        let result = run_loop(
            &seeds,
            &config,
            MutationPolicy::uniform(run_seed),
            &LoopEnv {
                student: &student,
                lexicon: &lexicon,
            },
        );
        let elapsed = start.elapsed();
        assert!(
            result.terminal_pass_rate <= target,
            "run seed {run_seed}: terminal pass rate {}",
            result.terminal_pass_rate
        );
        assert!(result.evaluate_phases <= 10);
        for record in &result.trace {
            assert!(
                record.guardrail_pass_rate >= guard_floor,
                "run seed {run_seed} t={}: guardrail pass rate {}",
                record.t,
                record.guardrail_pass_rate
            );
        }
        assert!(elapsed.as_secs() < 120, "run seed {run_seed} took {elapsed:?}");
        println!(
            "criterion 5 (closed loop, run seed {run_seed}): PASS — pass rate {} after {} phases in {elapsed:?}",
            result.terminal_pass_rate, result.evaluate_phases
        );
    }
}

/// 6. With the threshold disabled and four iterations configured, exactly
/// four evaluate phases execute.
#[test]
fn criterion_6_iteration_count_contract() {
    let seeds = fixtures::seed_batch();
    let student = StudentProfile::depth2_no_product();
    let lexicon = ThemeLexicon::builtin();
    let config = LoopConfig {
        max_iterations: 4,
        stop_threshold: None,
        batch_size: seeds.len(),
        ..LoopConfig::default()
    };
    let result = run_loop(
        &seeds,
        &config,
        MutationPolicy::uniform(1),
        &LoopEnv {
            student: &student,
            lexicon: &lexicon,
        },
    );
    assert_eq!(result.evaluate_phases, 4);
    assert_eq!(result.trace.len(), 4);
    assert!(!result.stopped_early);
    println!("criterion 6 (exactly 4 evaluate phases with threshold disabled): PASS");
}

/// Derives one hundred distinct valid seeds from the shipped batch.
fn hundred_seeds() -> Vec<Program> {
    let batch = fixtures::seed_batch();
    let mut out = Vec::with_capacity(100);
    for i in 0..100usize {
        let base = &batch[i % batch.len()];
        let mut p = base.clone();
        p.id = format!("{}_{i}", p.id);
        // jitter one constant so the derived seeds differ mathematically
        if let Some(Item::Const(c)) = p
            .items
            .iter_mut()
            .find(|item| matches!(item, Item::Const(_)))
        {
            c.value = &c.value + &Rational::from_int((i / batch.len()) as i64);
        }
        assert!(p.is_valid());
        assert!(solve(&p, SolveBudget::default()).is_unique(), "{}", p.id);
        out.push(p);
    }
    out
}

/// 7. Theme-resampled generation is strictly more text-diverse than the
/// fixed-theme surrogate, for every run seed in 1..=20, under the lexical
/// fallback embedder.
#[test]
fn criterion_7_diversity_direction() {
    let start = Instant::now();
    let seeds = hundred_seeds();
    let lexicon = ThemeLexicon::builtin();
    for run_seed in 1..=20u64 {
        let sym = diversity_report(
            &seeds,
            10,
            VariantMode::SymThemeResampled,
            &lexicon,
            None,
            run_seed,
        );
        let fixed = diversity_report(
            &seeds,
            10,
            VariantMode::NlFixedTheme,
            &lexicon,
            None,
            run_seed,
        );
        assert!(
            sym.grand_mean > fixed.grand_mean,
            "run seed {run_seed}: {} vs {}",
            sym.grand_mean,
            fixed.grand_mean
        );
    }
    let elapsed = start.elapsed();
    println!("criterion 7 (diversity direction, 20/20 run seeds): PASS in {elapsed:?}");
}

/// 8. Filtering a 10%-corrupted batch of four hundred records replaces
/// exactly the corrupted ones, and every surviving record re-solves to
/// its stated answer.
#[test]
fn criterion_8_filter_soundness() {
    let start = Instant::now();
    let lexicon = ThemeLexicon::builtin();
    let seeds: Vec<SeedRecord> = hundred_seeds()
        .iter()
        .map(|p| SeedRecord::from_program(p, "derived").unwrap())
        .collect();
    let policies: Vec<(String, MutationPolicy)> = (0..4)
        .map(|i| (format!("p{i}"), MutationPolicy::uniform(100 + i as u64)))
        .collect();
    let mut records = generate_dataset(&seeds, &policies, &lexicon, 0xf11e);
    assert_eq!(records.len(), 400);
    assert!(records.iter().all(|r| r.status == FilterStatus::Kept));

    let mut corrupted_ids = Vec::new();
    for (i, record) in records.iter_mut().enumerate() {
        if i % 10 == 0 {
            let bad = record.answer.as_ref().unwrap() + &Rational::one();
            record.answer = Some(bad);
            corrupted_ids.push(record.id.clone());
        }
    }
    assert_eq!(corrupted_ids.len(), 40);

    let filtered = filter_dataset(records, &seeds, &lexicon);
    assert_eq!(filtered.len(), 400, "replacements must re-validate");
    let budget = SolveBudget::default();
    for record in &filtered {
        let program = parse_program(&record.program).unwrap();
        let solved = solve(&program, budget);
        assert_eq!(
            solved.answer(),
            record.answer.as_ref(),
            "{} does not re-solve to its stated answer",
            record.id
        );
        if corrupted_ids.contains(&record.id) {
            assert_eq!(record.status, FilterStatus::Replaced, "{}", record.id);
        } else {
            assert_eq!(record.status, FilterStatus::Kept, "{}", record.id);
        }
    }
    let elapsed = start.elapsed();
    println!("criterion 8 (filter soundness on 400 records, 40 replaced): PASS in {elapsed:?}");
}

/// 9. Generating, solving, and rendering at the 1500 x 4 protocol scale
/// completes within ten minutes single-threaded.
#[test]
fn criterion_9_throughput_floor() {
    let start = Instant::now();
    let lexicon = ThemeLexicon::builtin();
    let batch = fixtures::seed_batch();
    let mut seeds = Vec::with_capacity(1500);
    for i in 0..1500usize {
        let base = &batch[i % batch.len()];
        let mut p = base.clone();
        p.id = format!("{}_{i}", p.id);
        seeds.push(SeedRecord::from_program(&p, "scale").unwrap());
    }
    let policies: Vec<(String, MutationPolicy)> = (0..4)
        .map(|i| (format!("p{i}"), MutationPolicy::uniform(i as u64)))
        .collect();
    let records = generate_dataset(&seeds, &policies, &lexicon, 0x5ca1e);
    assert_eq!(records.len(), 6000);
    let generated_ok = records
        .iter()
        .filter(|r| r.status == FilterStatus::Kept)
        .count();
    assert!(
        generated_ok as f64 >= 0.95 * records.len() as f64,
        "only {generated_ok} of {} generated cleanly",
        records.len()
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}");
    println!(
        "criterion 9 (throughput: 6000 records, {generated_ok} kept): PASS in {elapsed:?}"
    );
}
