//! Dataset plumbing: seed ingestion, batch generation, the
//! filter-and-replace stage, diversity and difficulty analytics, and run
//! manifests.
//!
//! Dataset files are line-delimited JSON (one record per line, UTF-8) with
//! a schema header record on the first line, chosen for streaming and
//! diff-friendliness. Every generated record carries full provenance
//! (seed, policy id, theme seed, operator trace), and offline generation
//! is deterministic, so a record can be re-generated byte-identically
//! from its manifest.

mod config;

pub use config::{ConfigError, PipelineConfig, PromptPack};

use crate::clients::{
    cosine_distance, embed_or_fallback, student_answer, Embedder, Student, StudentOutcome,
    StudentProfile,
};
use crate::dsl::{parse_program, print_program, Program};
use crate::mutate::{mutate, MutationKind, MutationPolicy};
use crate::rational::Rational;
use crate::render::{render, ThemeLexicon};
use crate::rng::{mix_seed, seed_from};
use crate::solver::{solve, SolveBudget};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

pub const DATASET_SCHEMA: &str = "probgen.dataset/1";
pub const SEEDS_SCHEMA: &str = "probgen.seeds/1";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
    #[error("seed `{id}` rejected: {reason}")]
    BadSeed { id: String, reason: String },
}

// ---------------------------------------------------------------------------
// records

/// An ingested seed problem: the program is the authority, the answer is
/// checked against it on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nl_text: Option<String>,
    pub program: String,
    pub answer: Rational,
    pub origin: String,
}

impl SeedRecord {
    /// Builds a record from a program, solving for the answer.
    pub fn from_program(p: &Program, origin: &str) -> Result<Self, PipelineError> {
        let outcome = solve(p, SolveBudget::default());
        let answer = outcome.answer().cloned().ok_or_else(|| PipelineError::BadSeed {
            id: p.id.clone(),
            reason: format!("no unique answer: {:?}", outcome.verdict),
        })?;
        Ok(SeedRecord {
            id: p.id.clone(),
            nl_text: p.meta.get("source_nl").cloned(),
            program: print_program(p),
            answer,
            origin: origin.to_string(),
        })
    }

    /// Parses and re-verifies the embedded program.
    pub fn to_program(&self) -> Result<Program, PipelineError> {
        let p = parse_program(&self.program).map_err(|e| PipelineError::BadSeed {
            id: self.id.clone(),
            reason: e.to_string(),
        })?;
        let solved = solve(&p, SolveBudget::default());
        match solved.answer() {
            Some(a) if a == &self.answer => Ok(p),
            Some(a) => Err(PipelineError::BadSeed {
                id: self.id.clone(),
                reason: format!("stated answer {} but program solves to {a}", self.answer),
            }),
            None => Err(PipelineError::BadSeed {
                id: self.id.clone(),
                reason: "program has no unique answer".into(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Repr {
    Sym,
    Nl,
    Smt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterStatus {
    Kept,
    Replaced,
    Dropped,
}

/// Guardrail outcome snapshot persisted with each record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuardrailSummary {
    pub unique_answer: bool,
    pub executes: bool,
    pub size_ok: bool,
    pub size_ratio: Rational,
}

impl From<&crate::solver::GuardrailReport> for GuardrailSummary {
    fn from(r: &crate::solver::GuardrailReport) -> Self {
        GuardrailSummary {
            unique_answer: r.unique_answer,
            executes: r.executes,
            size_ok: r.size_ok,
            size_ratio: r.size_ratio.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub id: String,
    pub seed_id: String,
    /// Which policy or prompt produced this record.
    pub prompt_id: String,
    pub representation: Repr,
    pub program: String,
    pub nl_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<Rational>,
    pub guardrails: GuardrailSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student: Option<StudentOutcome>,
    pub status: FilterStatus,
    pub trace: Vec<MutationKind>,
    pub fallback: bool,
    pub theme_seed: u64,
    /// Pre-replacement program, kept for provenance when `status` is
    /// `Replaced`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_program: Option<String>,
}

// ---------------------------------------------------------------------------
// dataset io

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
}

pub fn write_seeds(path: &Path, seeds: &[SeedRecord]) -> Result<(), PipelineError> {
    write_jsonl(path, SEEDS_SCHEMA, seeds)
}

pub fn read_seeds(path: &Path) -> Result<Vec<SeedRecord>, PipelineError> {
    read_jsonl(path, SEEDS_SCHEMA)
}

pub fn write_dataset(path: &Path, records: &[GeneratedRecord]) -> Result<(), PipelineError> {
    write_jsonl(path, DATASET_SCHEMA, records)
}

pub fn read_dataset(path: &Path) -> Result<Vec<GeneratedRecord>, PipelineError> {
    read_jsonl(path, DATASET_SCHEMA)
}

fn write_jsonl<T: Serialize>(path: &Path, schema: &str, records: &[T]) -> Result<(), PipelineError> {
    let mut out = Vec::new();
    serde_json::to_writer(
        &mut out,
        &Header {
            schema: schema.to_string(),
        },
    )
    .expect("header serializes");
    out.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    atomic_write(path, &out)?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(
    path: &Path,
    schema: &str,
) -> Result<Vec<T>, PipelineError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    let record_err = |line: usize, message: String| PipelineError::Record {
        path: path.display().to_string(),
        line,
        message,
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            let header: Header = serde_json::from_str(&line)
                .map_err(|e| record_err(1, format!("bad header: {e}")))?;
            if header.schema != schema {
                return Err(record_err(
                    1,
                    format!("schema `{}`, expected `{schema}`", header.schema),
                ));
            }
            continue;
        }
        let record: T =
            serde_json::from_str(&line).map_err(|e| record_err(i + 1, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

// ---------------------------------------------------------------------------
// generation

/// Generates one record per seed per policy. Per-record failures are
/// recorded with `Dropped` status; the batch never aborts.
pub fn generate_dataset(
    seeds: &[SeedRecord],
    policies: &[(String, MutationPolicy)],
    lexicon: &ThemeLexicon,
    run_seed: u64,
) -> Vec<GeneratedRecord> {
    let mut records = Vec::with_capacity(seeds.len() * policies.len());
    for seed in seeds {
        let seed_program = match seed.to_program() {
            Ok(p) => p,
            Err(e) => {
                // rejected at ingestion: one dropped record per policy slot
                for (prompt_id, _) in policies {
                    records.push(dropped_record(seed, prompt_id, &e.to_string()));
                }
                continue;
            }
        };
        for (prompt_id, policy) in policies {
            let policy = MutationPolicy {
                seed: mix_seed(run_seed, &[&seed.id, prompt_id]),
                ..policy.clone()
            };
            let result = mutate(&seed_program, &policy);
            let theme_seed = mix_seed(run_seed, &[&seed.id, prompt_id, "theme"]);
            let (nl_text, status) = if result.guardrails.passes() {
                match render(&result.program, lexicon, theme_seed) {
                    Ok(rendering) => (rendering.nl_text, FilterStatus::Kept),
                    Err(e) => (e.to_string(), FilterStatus::Dropped),
                }
            } else {
                (String::new(), FilterStatus::Dropped)
            };
            records.push(GeneratedRecord {
                id: format!("{}::{prompt_id}", seed.id),
                seed_id: seed.id.clone(),
                prompt_id: prompt_id.clone(),
                representation: Repr::Sym,
                program: print_program(&result.program),
                nl_text,
                answer: result.guardrails.answer.clone(),
                guardrails: (&result.guardrails).into(),
                student: None,
                status,
                trace: result.trace,
                fallback: result.fallback,
                theme_seed,
                original_program: None,
            });
        }
    }
    records
}

fn dropped_record(seed: &SeedRecord, prompt_id: &str, reason: &str) -> GeneratedRecord {
    GeneratedRecord {
        id: format!("{}::{prompt_id}", seed.id),
        seed_id: seed.id.clone(),
        prompt_id: prompt_id.to_string(),
        representation: Repr::Sym,
        program: seed.program.clone(),
        nl_text: reason.to_string(),
        answer: None,
        guardrails: GuardrailSummary {
            unique_answer: false,
            executes: false,
            size_ok: false,
            size_ratio: Rational::one(),
        },
        student: None,
        status: FilterStatus::Dropped,
        trace: vec![],
        fallback: false,
        theme_seed: 0,
        original_program: None,
    }
}

// ---------------------------------------------------------------------------
// filter and replace

/// Re-solves every record and compares with its stated answer. Mismatches
/// are replaced by a baseline regeneration on the same seed (a single
/// constant-scaling mutation); a replacement that fails its own
/// re-validation is dropped from the output. Every surviving record
/// re-solves to its stated answer.
pub fn filter_dataset(
    records: Vec<GeneratedRecord>,
    seeds: &[SeedRecord],
    lexicon: &ThemeLexicon,
) -> Vec<GeneratedRecord> {
    let by_id: BTreeMap<&str, &SeedRecord> =
        seeds.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut out = Vec::with_capacity(records.len());
    for mut record in records {
        if record.status == FilterStatus::Dropped {
            continue;
        }
        if record_re_solves(&record) {
            record.status = FilterStatus::Kept;
            out.push(record);
            continue;
        }
        // replacement: baseline mutation of the same seed
        let Some(seed) = by_id.get(record.seed_id.as_str()) else {
            continue;
        };
        let Ok(seed_program) = seed.to_program() else {
            continue;
        };
        let baseline = MutationPolicy {
            seed: seed_from(&[&record.id, "replacement"]),
            ..MutationPolicy::single(MutationKind::ScaleConstant, 0)
        };
        let regenerated = mutate(&seed_program, &baseline);
        if !regenerated.guardrails.passes() {
            continue; // second failure: drop
        }
        let theme_seed = seed_from(&[&record.id, "replacement-theme"]);
        let Ok(rendering) = render(&regenerated.program, lexicon, theme_seed) else {
            continue;
        };
        let replacement = GeneratedRecord {
            original_program: Some(std::mem::take(&mut record.program)),
            program: print_program(&regenerated.program),
            nl_text: rendering.nl_text,
            answer: regenerated.guardrails.answer.clone(),
            guardrails: (&regenerated.guardrails).into(),
            status: FilterStatus::Replaced,
            trace: regenerated.trace,
            fallback: regenerated.fallback,
            theme_seed,
            ..record
        };
        if record_re_solves(&replacement) {
            out.push(replacement);
        }
    }
    out
}

fn record_re_solves(record: &GeneratedRecord) -> bool {
    let Some(stated) = &record.answer else {
        return false;
    };
    let Ok(p) = parse_program(&record.program) else {
        return false;
    };
    solve(&p, SolveBudget::default()).answer() == Some(stated)
}

// ---------------------------------------------------------------------------
// diversity analytics

/// How variants are surfaced for the diversity measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariantMode {
    /// Symbolic pipeline: the theme is resampled per variant, so surface
    /// vocabulary varies freely.
    SymThemeResampled,
    /// Text-pipeline surrogate: one fixed theme per seed, mimicking
    /// rewrites that keep protagonists and setting.
    NlFixedTheme,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiversityReport {
    pub per_seed: Vec<(String, f64)>,
    pub grand_mean: f64,
    pub variants_per_seed: usize,
    pub embedder_id: String,
    pub used_fallback_embedder: bool,
}

/// Generates `k` variants per seed, renders them, embeds the texts, and
/// averages pairwise cosine distances per seed and overall.
pub fn diversity_report(
    seeds: &[Program],
    k: usize,
    mode: VariantMode,
    lexicon: &ThemeLexicon,
    embedder: Option<&dyn Embedder>,
    run_seed: u64,
) -> DiversityReport {
    assert!(k >= 2, "need at least two variants per seed");
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut embedder_id = String::new();
    let mut used_fallback = false;
    for seed in seeds {
        let mut texts = Vec::with_capacity(k);
        for j in 0..k {
            let variant_tag = format!("variant{j}");
            let policy = MutationPolicy {
                seed: mix_seed(run_seed, &[&seed.id, &variant_tag]),
                chain_depth: 2,
                ..MutationPolicy::uniform(0)
            };
            let result = mutate(seed, &policy);
            let program = if result.guardrails.passes() {
                result.program
            } else {
                seed.clone()
            };
            let theme_seed = match mode {
                VariantMode::SymThemeResampled => {
                    mix_seed(run_seed, &[&seed.id, &variant_tag, "theme"])
                }
                VariantMode::NlFixedTheme => mix_seed(run_seed, &[&seed.id, "fixed-theme"]),
            };
            let text = render(&program, lexicon, theme_seed)
                .map(|r| r.nl_text)
                .unwrap_or_default();
            texts.push(text);
        }
        let (vectors, id, fell_back) = embed_or_fallback(&texts, embedder);
        embedder_id = id;
        used_fallback |= fell_back;
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..vectors.len() {
            for j in (i + 1)..vectors.len() {
                sum += cosine_distance(&vectors[i], &vectors[j]);
                pairs += 1;
            }
        }
        per_seed.push((seed.id.clone(), sum / pairs.max(1) as f64));
    }
    let grand_mean = per_seed.iter().map(|(_, d)| d).sum::<f64>() / per_seed.len().max(1) as f64;
    DiversityReport {
        per_seed,
        grand_mean,
        variants_per_seed: k,
        embedder_id,
        used_fallback_embedder: used_fallback,
    }
}

// ---------------------------------------------------------------------------
// difficulty analytics

#[derive(Clone, Debug, Serialize)]
pub struct DifficultyRow {
    pub profile: String,
    pub prompt_id: String,
    pub pass_rate: Rational,
    pub problems: usize,
}

/// Student pass rates per (profile, prompt), with a seed-set baseline row
/// per profile.
pub fn difficulty_report(
    seeds: &[SeedRecord],
    records: &[GeneratedRecord],
    profiles: &[(String, StudentProfile)],
) -> Vec<DifficultyRow> {
    let mut rows = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&GeneratedRecord>> = BTreeMap::new();
    for r in records {
        if r.status == FilterStatus::Kept || r.status == FilterStatus::Replaced {
            groups.entry(r.prompt_id.as_str()).or_default().push(r);
        }
    }
    for (label, profile) in profiles {
        // baseline: the seed problems themselves
        let mut correct = 0usize;
        let mut total = 0usize;
        for seed in seeds {
            if let Ok(p) = seed.to_program() {
                if let Ok(outcome) = student_answer(&p, "", &Student::Mock(profile)) {
                    total += 1;
                    correct += outcome.correct as usize;
                }
            }
        }
        rows.push(DifficultyRow {
            profile: label.clone(),
            prompt_id: "seed".into(),
            pass_rate: rate(correct, total),
            problems: total,
        });
        for (prompt_id, group) in &groups {
            let mut correct = 0usize;
            let mut total = 0usize;
            for record in group {
                let Ok(p) = parse_program(&record.program) else {
                    continue;
                };
                if let Ok(outcome) = student_answer(&p, &record.nl_text, &Student::Mock(profile)) {
                    total += 1;
                    correct += outcome.correct as usize;
                }
            }
            rows.push(DifficultyRow {
                profile: label.clone(),
                prompt_id: prompt_id.to_string(),
                pass_rate: rate(correct, total),
                problems: total,
            });
        }
    }
    rows
}

fn rate(correct: usize, total: usize) -> Rational {
    if total == 0 {
        Rational::zero()
    } else {
        Rational::from_frac(correct as i64, total as i64)
    }
}

// ---------------------------------------------------------------------------
// run manifest

/// Machine-readable record of a run: enough to replay it exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    pub config_hash: String,
    pub run_seed: u64,
    pub seed_ids: Vec<String>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &PipelineConfig, run_seed: u64, seed_ids: Vec<String>) -> Self {
        RunManifest {
            schema: "probgen.manifest/1".into(),
            command: command.to_string(),
            config_hash: format!("{:016x}", seed_from(&[&config.canonical_text()])),
            run_seed,
            seed_ids,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    /// Written once, atomically.
    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        atomic_write(path, &bytes)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn seed_records() -> Vec<SeedRecord> {
        fixtures::seed_batch()
            .iter()
            .map(|p| SeedRecord::from_program(p, "fixture").unwrap())
            .collect()
    }

    fn policies(n: usize) -> Vec<(String, MutationPolicy)> {
        (0..n)
            .map(|i| (format!("policy{i}"), MutationPolicy::uniform(i as u64)))
            .collect()
    }

    #[test]
    fn generate_produces_seeds_times_policies() {
        let seeds = seed_records();
        let lexicon = ThemeLexicon::builtin();
        let records = generate_dataset(&seeds, &policies(4), &lexicon, 7);
        assert_eq!(records.len(), seeds.len() * 4);
        for r in &records {
            assert!(!r.prompt_id.is_empty());
            assert!(!r.seed_id.is_empty());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let seeds = seed_records();
        let lexicon = ThemeLexicon::builtin();
        let a = generate_dataset(&seeds, &policies(2), &lexicon, 42);
        let b = generate_dataset(&seeds, &policies(2), &lexicon, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn theme_only_policy_preserves_answer() {
        let seeds = seed_records();
        let lexicon = ThemeLexicon::builtin();
        let policy = vec![(
            "theme".to_string(),
            MutationPolicy::single(MutationKind::ThemeOnly, 5),
        )];
        let records = generate_dataset(&seeds[..1], &policy, &lexicon, 3);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].answer.as_ref(), Some(&seeds[0].answer));
    }

    #[test]
    fn unsolvable_seed_rejected_at_ingestion() {
        let lexicon = ThemeLexicon::builtin();
        let bad = SeedRecord {
            id: "bad".into(),
            nl_text: None,
            program: "problem \"bad\" { var x: rat; var y: rat; constraint x * y == 0; answer = x; }"
                .into(),
            answer: Rational::zero(),
            origin: "test".into(),
        };
        assert!(bad.to_program().is_err());
        let records = generate_dataset(&[bad], &policies(2), &lexicon, 1);
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.status == FilterStatus::Dropped));
    }

    #[test]
    fn filter_replaces_corrupted_answers() {
        let seeds = seed_records();
        let lexicon = ThemeLexicon::builtin();
        let mut records = generate_dataset(&seeds, &policies(1), &lexicon, 11);
        let total = records.len();
        // corrupt some stated answers
        for (i, r) in records.iter_mut().enumerate() {
            if i % 4 == 0 {
                if let Some(a) = &r.answer {
                    r.answer = Some(a + &Rational::one());
                }
            }
        }
        let corrupted: Vec<String> = records
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 4 == 0)
            .map(|(_, r)| r.id.clone())
            .collect();
        let filtered = filter_dataset(records, &seeds, &lexicon);
        assert_eq!(filtered.len(), total, "replacements should re-validate");
        for r in &filtered {
            assert!(record_re_solves(r), "{} does not re-solve", r.id);
            if corrupted.contains(&r.id) {
                assert_eq!(r.status, FilterStatus::Replaced);
                assert!(r.original_program.is_some());
            } else {
                assert_eq!(r.status, FilterStatus::Kept);
            }
        }
    }

    #[test]
    fn filter_keeps_valid_batch_unchanged() {
        let seeds = seed_records();
        let lexicon = ThemeLexicon::builtin();
        let records = generate_dataset(&seeds, &policies(2), &lexicon, 13);
        let filtered = filter_dataset(records.clone(), &seeds, &lexicon);
        assert_eq!(filtered.len(), records.len());
        assert!(filtered.iter().all(|r| r.status == FilterStatus::Kept));
    }

    #[test]
    fn dataset_roundtrip_with_header() {
        let seeds = seed_records();
        let lexicon = ThemeLexicon::builtin();
        let records = generate_dataset(&seeds[..3], &policies(2), &lexicon, 1);
        let path = std::env::temp_dir().join("probgen_dataset_test.jsonl");
        write_dataset(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains(DATASET_SCHEMA));
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn diversity_direction_sym_exceeds_fixed_theme() {
        let seeds = fixtures::seed_batch();
        let lexicon = ThemeLexicon::builtin();
        let sym = diversity_report(&seeds, 4, VariantMode::SymThemeResampled, &lexicon, None, 5);
        let nl = diversity_report(&seeds, 4, VariantMode::NlFixedTheme, &lexicon, None, 5);
        assert!(
            sym.grand_mean > nl.grand_mean,
            "sym {} vs fixed-theme {}",
            sym.grand_mean,
            nl.grand_mean
        );
    }

    #[test]
    fn identical_variants_have_zero_diversity() {
        let seeds: Vec<Program> = fixtures::seed_batch().into_iter().take(2).collect();
        let lexicon = ThemeLexicon::builtin();
        // theme-only mutations with a fixed theme render identical texts
        let report = {
            let mut texts_identical = true;
            for seed in &seeds {
                let a = render(seed, &lexicon, 1).unwrap();
                let b = render(seed, &lexicon, 1).unwrap();
                texts_identical &= a == b;
            }
            assert!(texts_identical);
            // k identical texts: distance 0
            let texts = vec![
                render(&seeds[0], &lexicon, 1).unwrap().nl_text,
                render(&seeds[0], &lexicon, 1).unwrap().nl_text,
            ];
            let (vectors, _, _) = embed_or_fallback(&texts, None);
            cosine_distance(&vectors[0], &vectors[1])
        };
        assert!(report.abs() < 1e-12);
    }

    #[test]
    fn difficulty_report_has_baseline_and_omniscient_rates() {
        let seeds = seed_records();
        let lexicon = ThemeLexicon::builtin();
        let records = generate_dataset(&seeds, &policies(2), &lexicon, 17);
        let records = filter_dataset(records, &seeds, &lexicon);
        let profiles = vec![
            ("omniscient".to_string(), StudentProfile::omniscient()),
            ("depth2".to_string(), StudentProfile::depth2_no_product()),
        ];
        let rows = difficulty_report(&seeds, &records, &profiles);
        // omniscient passes everything
        for row in rows.iter().filter(|r| r.profile == "omniscient") {
            assert_eq!(row.pass_rate, Rational::one(), "{}", row.prompt_id);
        }
        // the baseline row exists for each profile
        assert_eq!(rows.iter().filter(|r| r.prompt_id == "seed").count(), 2);
        let empty = difficulty_report(&seeds, &[], &profiles);
        assert!(empty.iter().all(|r| r.prompt_id == "seed"));
    }

    #[test]
    fn manifest_roundtrip() {
        let config = PipelineConfig::default();
        let manifest = RunManifest::new("generate", &config, 9, vec!["a".into()]);
        let path = std::env::temp_dir().join("probgen_manifest_test.json");
        manifest.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.config_hash, manifest.config_hash);
        assert_eq!(back.run_seed, 9);
    }
}
