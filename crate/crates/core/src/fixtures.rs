//! Embedded reference problems used by tests, the seed batch, and the CLI
//! demo paths.

use crate::dsl::{parse_program, Program};

pub const NATALIA: &str = include_str!("../fixtures/natalia.spp");
pub const WENG: &str = include_str!("../fixtures/weng.spp");
pub const LIZA: &str = include_str!("../fixtures/liza.spp");
pub const MONSTER: &str = include_str!("../fixtures/monster.spp");
pub const TANKS: &str = include_str!("../fixtures/tanks.spp");
pub const CONTRACTOR: &str = include_str!("../fixtures/contractor.spp");
pub const WIDGETS: &str = include_str!("../fixtures/widgets.spp");

pub const SMT_NOVEL: &str = include_str!("../fixtures/smt_novel.smt2");
pub const SMT_WALLET: &str = include_str!("../fixtures/smt_wallet.smt2");

/// All DSL fixtures as (name, source) pairs.
pub const DSL_FIXTURES: &[(&str, &str)] = &[
    ("natalia", NATALIA),
    ("weng", WENG),
    ("liza", LIZA),
    ("monster", MONSTER),
    ("tanks", TANKS),
    ("contractor", CONTRACTOR),
    ("widgets", WIDGETS),
];

/// Parses every DSL fixture; they are all valid by construction.
pub fn all_programs() -> Vec<Program> {
    DSL_FIXTURES
        .iter()
        .map(|(name, src)| parse_program(src).unwrap_or_else(|e| panic!("fixture {name}: {e}")))
        .collect()
}

/// The sixteen-seed batch used by the optimization loop: straight-line
/// problems with chains at most two deep, all solvable by a depth-2
/// student before mutation.
pub const SEED_BATCH: &[(&str, &str)] = &[
    ("bakery_trays", include_str!("../fixtures/seed_batch/bakery_trays.spp")),
    ("candies_share", include_str!("../fixtures/seed_batch/candies_share.spp")),
    ("paint_cans", include_str!("../fixtures/seed_batch/paint_cans.spp")),
    ("library_books", include_str!("../fixtures/seed_batch/library_books.spp")),
    ("garden_rows", include_str!("../fixtures/seed_batch/garden_rows.spp")),
    ("market_melons", include_str!("../fixtures/seed_batch/market_melons.spp")),
    ("arcade_tokens", include_str!("../fixtures/seed_batch/arcade_tokens.spp")),
    ("aquarium_fish", include_str!("../fixtures/seed_batch/aquarium_fish.spp")),
    ("recipe_flour", include_str!("../fixtures/seed_batch/recipe_flour.spp")),
    ("trip_fuel", include_str!("../fixtures/seed_batch/trip_fuel.spp")),
    ("savings_weeks", include_str!("../fixtures/seed_batch/savings_weeks.spp")),
    ("choir_rows", include_str!("../fixtures/seed_batch/choir_rows.spp")),
    ("orchard_apples", include_str!("../fixtures/seed_batch/orchard_apples.spp")),
    ("school_pencils", include_str!("../fixtures/seed_batch/school_pencils.spp")),
    ("ferry_cars", include_str!("../fixtures/seed_batch/ferry_cars.spp")),
    ("stamps_album", include_str!("../fixtures/seed_batch/stamps_album.spp")),
];

/// Parses the seed batch.
pub fn seed_batch() -> Vec<Program> {
    SEED_BATCH
        .iter()
        .map(|(name, src)| parse_program(src).unwrap_or_else(|e| panic!("seed {name}: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::Rational;
    use crate::smt::parse_smt;
    use crate::solver::{solve, SolveBudget};

    #[test]
    fn dsl_fixtures_solve_to_reference_answers() {
        let expected = [
            ("natalia", Rational::from_int(72)),
            ("weng", Rational::from_int(10)),
            ("liza", Rational::from_int(2)),
            ("monster", Rational::from_int(121)),
            ("tanks", Rational::from_int(40)),
            ("contractor", Rational::from_frac(83, 6)),
            ("widgets", Rational::from_int(120)),
        ];
        for ((name, src), (ename, value)) in DSL_FIXTURES.iter().zip(expected.iter()) {
            assert_eq!(name, ename);
            let p = parse_program(src).unwrap();
            assert!(p.is_valid(), "{name} invalid");
            let out = solve(&p, SolveBudget::default());
            assert_eq!(out.answer(), Some(value), "{name}");
        }
    }

    #[test]
    fn smt_fixtures_parse_and_solve() {
        let novel = parse_smt(SMT_NOVEL).unwrap();
        assert_eq!(
            solve(&novel, SolveBudget::default()).answer(),
            Some(&Rational::from_int(72))
        );
        let wallet = parse_smt(SMT_WALLET).unwrap();
        assert_eq!(
            solve(&wallet, SolveBudget::default()).answer(),
            Some(&Rational::from_int(3))
        );
    }

    #[test]
    fn liza_golden_size() {
        let p = parse_program(LIZA).unwrap();
        assert_eq!(p.size(), 24);
    }

    #[test]
    fn seed_batch_is_sixteen_easy_unique_problems() {
        let seeds = seed_batch();
        assert_eq!(seeds.len(), 16);
        for p in &seeds {
            assert!(p.is_valid(), "{}", p.id);
            assert!(p.is_straight_line(), "{}", p.id);
            assert!(p.chain_depth() <= 2, "{} depth {}", p.id, p.chain_depth());
            let out = solve(&p, SolveBudget::default());
            assert!(out.is_unique(), "{}: {:?}", p.id, out.verdict);
        }
    }
}
