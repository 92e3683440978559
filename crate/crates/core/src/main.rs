//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Every run writes a
//! machine-readable manifest: next to `--out` when given, otherwise as a
//! single line on stderr.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use probgen::clients::{DifficultyVariant, Representation, StudentProfile};
use probgen::dsl::{parse_program, print_program, Program};
use probgen::fixtures;
use probgen::mutate::{mutate, MutationKind, MutationPolicy};
use probgen::optim::{run_loop, LoopEnv, LoopResult};
use probgen::pipeline::{
    diversity_report, filter_dataset, generate_dataset, read_dataset, read_seeds, write_dataset,
    PipelineConfig, RunManifest, SeedRecord, VariantMode,
};
use probgen::render::{render, ThemeLexicon};
use probgen::rng::mix_seed;
use probgen::smt::{emit_smt, parse_smt};
use probgen::solver::{solve, SolveBudget, Verdict};
use serde_json::json;
use std::io::Read;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "probgen",
    version,
    about = "Generate verified, adaptively difficult math word problems from symbolic programs"
)]
struct Cli {
    /// Run configuration file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root random seed for this run.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output path; results print to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem program and print its answer ("-" reads stdin).
    Solve {
        input: PathBuf,
        /// Also print the strategy and enumeration count.
        #[arg(long)]
        stats: bool,
    },
    /// Render a program as a word problem.
    Render {
        input: PathBuf,
        #[arg(long = "theme-seed", default_value_t = 0)]
        theme_seed: u64,
        /// Theme lexicon file; the builtin lexicon is used when omitted.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Apply the mutation policy once and print the mutated program.
    Mutate {
        input: PathBuf,
        /// Force a single operator kind instead of sampling by weight.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, default_value_t = 1)]
        depth: u32,
    },
    /// Translate a program to an SMT-LIB script.
    EmitSmt { input: PathBuf },
    /// Translate an SMT-LIB script to a program.
    ImportSmt { input: PathBuf },
    /// Generate one datapoint per seed per policy.
    Generate {
        /// Seeds file (JSONL), or "builtin" for the shipped seed batch.
        #[arg(long)]
        seeds: String,
        /// Number of generation policies.
        #[arg(long, default_value_t = 4)]
        policies: usize,
    },
    /// Run the closed-loop policy optimization and persist its trace.
    Optimize {
        #[arg(long)]
        seeds: String,
        #[arg(long, default_value_t = 0)]
        variant: u8,
        #[arg(long, default_value = "sym")]
        rep: String,
    },
    /// Re-solve a dataset, replacing records that fail validation.
    Filter {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        seeds: String,
    },
    /// Measure pairwise text diversity of generated variants.
    Diversity {
        #[arg(long)]
        seeds: String,
        /// Variants per seed.
        #[arg(long, default_value_t = 10)]
        variants: usize,
        /// Use one fixed theme per seed instead of resampling.
        #[arg(long)]
        fixed_theme: bool,
    },
    /// Student pass-rate table over a dataset, with a seed baseline.
    Difficulty {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        seeds: String,
    },
    /// Merge seed problems and kept generated records into one training
    /// set (question/answer JSONL).
    Merge {
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        dataset: PathBuf,
    },
}

fn main() {
    // usage problems exit 1; data problems exit 2
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { 1 } else { 0 };
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path).context("loading --config")?,
        None => PipelineConfig::default(),
    };
    match &cli.command {
        Command::Solve { input, stats } => {
            let program = load_program(input)?;
            let outcome = solve(&program, SolveBudget::default());
            match &outcome.verdict {
                Verdict::Unique { answer, witness } => {
                    println!("{answer}");
                    if *stats {
                        eprintln!(
                            "strategy: {:?}; assignments: {}; witness: {:?}",
                            outcome.stats.strategy, outcome.stats.assignments_enumerated, witness
                        );
                    }
                }
                other => bail!("no unique answer: {other:?}"),
            }
            Ok(())
        }
        Command::Render {
            input,
            theme_seed,
            lexicon,
        } => {
            let program = load_program(input)?;
            let lexicon = load_lexicon(lexicon.as_deref())?;
            let rendering = render(&program, &lexicon, *theme_seed)?;
            emit(&cli, rendering.nl_text.as_bytes(), true)?;
            Ok(())
        }
        Command::Mutate { input, kind, depth } => {
            let program = load_program(input)?;
            let mut policy = match kind {
                Some(name) => MutationPolicy::single(parse_kind(name)?, cli.seed),
                None => MutationPolicy::uniform(cli.seed),
            };
            policy.chain_depth = (*depth).clamp(1, 4);
            let result = mutate(&program, &policy);
            emit(&cli, print_program(&result.program).as_bytes(), false)?;
            eprintln!(
                "ops: [{}]; fallback: {}; guardrails: unique={} executes={} size_ratio={}",
                result
                    .trace
                    .iter()
                    .map(|k| k.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
                result.fallback,
                result.guardrails.unique_answer,
                result.guardrails.executes,
                result.guardrails.size_ratio,
            );
            Ok(())
        }
        Command::EmitSmt { input } => {
            let program = load_program(input)?;
            let script = emit_smt(&program)?;
            emit(&cli, script.to_text().as_bytes(), false)?;
            Ok(())
        }
        Command::ImportSmt { input } => {
            let text = read_input(input)?;
            let program = parse_smt(&text)?;
            emit(&cli, print_program(&program).as_bytes(), false)?;
            Ok(())
        }
        Command::Generate { seeds, policies } => {
            let seed_records = load_seed_records(seeds)?;
            let lexicon = ThemeLexicon::builtin();
            let policy_set: Vec<(String, MutationPolicy)> = (0..*policies)
                .map(|i| {
                    (
                        format!("p{i}"),
                        MutationPolicy {
                            chain_depth: 2,
                            ..MutationPolicy::uniform(mix_seed(cli.seed, &[&format!("p{i}")]))
                        },
                    )
                })
                .collect();
            let records = generate_dataset(&seed_records, &policy_set, &lexicon, cli.seed);
            write_manifest(&cli, &config, "generate", &seed_records)?;
            match &cli.out {
                Some(path) => {
                    write_dataset(path, &records)?;
                    eprintln!("wrote {} records to {}", records.len(), path.display());
                }
                None => {
                    for r in &records {
                        println!("{}", serde_json::to_string(r)?);
                    }
                }
            }
            Ok(())
        }
        Command::Optimize { seeds, variant, rep } => {
            if *variant > 3 {
                bail!("--variant must be 0..=3");
            }
            let seed_records = load_seed_records(seeds)?;
            let programs: Vec<Program> = seed_records
                .iter()
                .map(|s| s.to_program().map_err(|e| anyhow!(e)))
                .collect::<Result<_>>()?;
            let lexicon = ThemeLexicon::builtin();
            let student = StudentProfile::depth2_no_product();
            let mut loop_config = config.loop_config.clone();
            loop_config.variant = DifficultyVariant(*variant);
            loop_config.representation = match rep.as_str() {
                "sym" => Representation::Sym,
                "nl" => Representation::Nl,
                other => bail!("--rep must be sym or nl, got `{other}`"),
            };
            let result = run_loop(
                &programs,
                &loop_config,
                MutationPolicy::uniform(cli.seed),
                &LoopEnv {
                    student: &student,
                    lexicon: &lexicon,
                },
            );
            write_manifest(&cli, &config, "optimize", &seed_records)?;
            let trace_text = trace_jsonl(&result)?;
            emit(&cli, trace_text.as_bytes(), false)?;
            eprintln!(
                "evaluate phases: {}; terminal pass rate: {}; stopped early: {}",
                result.evaluate_phases, result.terminal_pass_rate, result.stopped_early
            );
            Ok(())
        }
        Command::Filter { dataset, seeds } => {
            let records = read_dataset(dataset)?;
            let seed_records = load_seed_records(seeds)?;
            let lexicon = ThemeLexicon::builtin();
            let total = records.len();
            let filtered = filter_dataset(records, &seed_records, &lexicon);
            let replaced = filtered
                .iter()
                .filter(|r| r.status == probgen::pipeline::FilterStatus::Replaced)
                .count();
            write_manifest(&cli, &config, "filter", &seed_records)?;
            match &cli.out {
                Some(path) => write_dataset(path, &filtered)?,
                None => {
                    for r in &filtered {
                        println!("{}", serde_json::to_string(r)?);
                    }
                }
            }
            eprintln!(
                "kept {} of {total} records ({replaced} replaced)",
                filtered.len()
            );
            Ok(())
        }
        Command::Diversity {
            seeds,
            variants,
            fixed_theme,
        } => {
            let seed_records = load_seed_records(seeds)?;
            let programs: Vec<Program> = seed_records
                .iter()
                .map(|s| s.to_program().map_err(|e| anyhow!(e)))
                .collect::<Result<_>>()?;
            let lexicon = ThemeLexicon::builtin();
            let mode = if *fixed_theme {
                VariantMode::NlFixedTheme
            } else {
                VariantMode::SymThemeResampled
            };
            let report = diversity_report(&programs, *variants, mode, &lexicon, None, cli.seed);
            write_manifest(&cli, &config, "diversity", &seed_records)?;
            emit(&cli, serde_json::to_string_pretty(&report)?.as_bytes(), true)?;
            Ok(())
        }
        Command::Difficulty { dataset, seeds } => {
            let records = read_dataset(dataset)?;
            let seed_records = load_seed_records(seeds)?;
            let profiles = vec![
                ("omniscient".to_string(), StudentProfile::omniscient()),
                (
                    "depth2_no_product".to_string(),
                    StudentProfile::depth2_no_product(),
                ),
                ("depth1".to_string(), StudentProfile::depth_limited(1)),
            ];
            let rows = probgen::pipeline::difficulty_report(&seed_records, &records, &profiles);
            write_manifest(&cli, &config, "difficulty", &seed_records)?;
            let mut table = String::from("profile\tprompt\tpass_rate\tproblems\n");
            for row in rows {
                table.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    row.profile, row.prompt_id, row.pass_rate, row.problems
                ));
            }
            emit(&cli, table.as_bytes(), false)?;
            Ok(())
        }
        Command::Merge { seeds, dataset } => {
            let seed_records = load_seed_records(seeds)?;
            let records = read_dataset(dataset)?;
            let mut lines = Vec::new();
            for s in &seed_records {
                let question = s.nl_text.clone().unwrap_or_else(|| s.program.clone());
                lines.push(json!({"id": s.id, "question": question, "answer": s.answer}));
            }
            for r in &records {
                if matches!(
                    r.status,
                    probgen::pipeline::FilterStatus::Kept
                        | probgen::pipeline::FilterStatus::Replaced
                ) {
                    lines.push(json!({"id": r.id, "question": r.nl_text, "answer": r.answer}));
                }
            }
            write_manifest(&cli, &config, "merge", &seed_records)?;
            let mut text = String::new();
            for l in &lines {
                text.push_str(&l.to_string());
                text.push('\n');
            }
            emit(&cli, text.as_bytes(), false)?;
            eprintln!("merged {} training records", lines.len());
            Ok(())
        }
    }
}

/// Reads a file, or stdin for "-".
fn read_input(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text)?;
        Ok(text)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn load_program(path: &Path) -> Result<Program> {
    let text = read_input(path)?;
    Ok(parse_program(&text)?)
}

fn load_lexicon(path: Option<&Path>) -> Result<ThemeLexicon> {
    match path {
        Some(p) => Ok(ThemeLexicon::from_path(p)?),
        None => Ok(ThemeLexicon::builtin()),
    }
}

/// Seeds come from a JSONL file, a single `.spp` program, or the shipped
/// batch (`builtin`).
fn load_seed_records(spec: &str) -> Result<Vec<SeedRecord>> {
    if spec == "builtin" {
        return fixtures::seed_batch()
            .iter()
            .map(|p| SeedRecord::from_program(p, "builtin").map_err(|e| anyhow!(e)))
            .collect();
    }
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "spp") {
        let program = load_program(path)?;
        return Ok(vec![SeedRecord::from_program(&program, "file")?]);
    }
    Ok(read_seeds(path)?)
}

fn parse_kind(name: &str) -> Result<MutationKind> {
    MutationKind::ALL
        .into_iter()
        .find(|k| k.to_string() == name)
        .ok_or_else(|| {
            anyhow!(
                "unknown operator `{name}`; one of: {}",
                MutationKind::ALL
                    .iter()
                    .map(|k| k.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
}

/// Writes output to --out or stdout; `ensure_newline` adds one for text.
fn emit(cli: &Cli, bytes: &[u8], ensure_newline: bool) -> Result<()> {
    match &cli.out {
        Some(path) => {
            let mut owned = bytes.to_vec();
            if ensure_newline && !owned.ends_with(b"\n") {
                owned.push(b'\n');
            }
            std::fs::write(path, owned)?;
        }
        None => {
            use std::io::Write;
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(bytes)?;
            if ensure_newline && !bytes.ends_with(b"\n") {
                lock.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn write_manifest(
    cli: &Cli,
    config: &PipelineConfig,
    command: &str,
    seeds: &[SeedRecord],
) -> Result<()> {
    let manifest = RunManifest::new(
        command,
        config,
        cli.seed,
        seeds.iter().map(|s| s.id.clone()).collect(),
    );
    match &cli.out {
        Some(path) => {
            let mut manifest_path = path.clone();
            manifest_path.set_extension("manifest.json");
            manifest.write(&manifest_path)?;
        }
        None => {
            eprintln!("manifest: {}", serde_json::to_string(&manifest)?);
        }
    }
    Ok(())
}

/// The optimization trace as line-delimited records under a header.
fn trace_jsonl(result: &LoopResult) -> Result<String> {
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&json!({"schema": "probgen.trace/1"}))?);
    out.push('\n');
    for record in &result.trace {
        let weights: serde_json::Map<String, serde_json::Value> = record
            .policy
            .weights
            .iter()
            .map(|(k, w)| (k.to_string(), serde_json::Value::String(w.to_string())))
            .collect();
        let line = json!({
            "t": record.t,
            "loss": record.loss.to_string(),
            "pass_rate": record.pass_rate.to_string(),
            "guardrail_pass_rate": record.guardrail_pass_rate.to_string(),
            "chain_depth": record.policy.chain_depth,
            "weights": weights,
            "neighbor_accepted": record.neighbor.as_ref().map(|n| n.accepted),
            "neighbor_loss": record.neighbor.as_ref().map(|n| n.loss.to_string()),
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    Ok(out)
}
