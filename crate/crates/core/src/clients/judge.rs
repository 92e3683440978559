//! Generation quality judging: the programmatic surrogate for an LLM
//! evaluator, plus the chat-backed path that degrades to it.
//!
//! A verdict has two halves. Difficulty is satisfied exactly when the
//! student got the problem wrong. Guardrails are representation-specific:
//! symbolic generations re-run the programmatic checks (unique answer,
//! executes, 1.5x size), text generations check the word-count ratio and
//! the single-question contract. Variants 1..3 add structural
//! requirements: only local edits, at least one extra derivation step, or
//! a new interdependent quantity.

use super::student::StudentOutcome;
use super::{ChatClient, ChatRequest};
use crate::dsl::Program;
use crate::mutate::MutationKind;
use crate::rational::Rational;
use crate::render::{nl_length_ratio, Rendering};
use crate::solver::{check_guardrails, SolveBudget};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    Sym,
    Nl,
}

/// Difficulty-criterion variant index, 0..=3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyVariant(pub u8);

impl DifficultyVariant {
    pub fn new(v: u8) -> Self {
        assert!(v <= 3, "variant index out of range");
        DifficultyVariant(v)
    }
}

pub struct JudgeContext<'a> {
    pub variant: DifficultyVariant,
    pub representation: Representation,
    pub seed_program: &'a Program,
    pub generated_program: &'a Program,
    pub seed_nl: Option<&'a str>,
    pub generated_rendering: Option<&'a Rendering>,
    /// Operator trace when the generation came from the policy mutator.
    pub trace: &'a [MutationKind],
    /// Student outcome, absent when the problem had no unique ground truth.
    pub outcome: Option<&'a StudentOutcome>,
    pub answer: Option<&'a crate::rational::Rational>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    /// The student got it wrong.
    pub difficulty_ok: bool,
    /// Quality guardrails all hold.
    pub guardrails_ok: bool,
    /// The variant's structural requirement holds.
    pub variant_ok: bool,
    /// Textual loss record for the prompt-optimization path.
    pub notes: String,
}

impl JudgeVerdict {
    pub fn all_ok(&self) -> bool {
        self.difficulty_ok && self.guardrails_ok && self.variant_ok
    }
}

/// Deterministic programmatic judgment.
pub fn judge(ctx: &JudgeContext<'_>) -> JudgeVerdict {
    let difficulty_ok = ctx.outcome.map(|o| !o.correct).unwrap_or(false);

    let guardrails_ok = match ctx.representation {
        Representation::Sym => {
            check_guardrails(ctx.seed_program, ctx.generated_program, SolveBudget::default())
                .passes()
        }
        Representation::Nl => match (ctx.seed_nl, ctx.generated_rendering) {
            (Some(seed_nl), Some(rendering)) => {
                rendering.well_formed()
                    && nl_length_ratio(seed_nl, rendering) <= Rational::from_frac(3, 2)
            }
            _ => false,
        },
    };

    let variant_ok = match ctx.variant.0 {
        0 => true,
        1 => !ctx.trace.is_empty() && ctx.trace.iter().all(|k| k.is_local()),
        2 => ctx.generated_program.step_count() > ctx.seed_program.step_count(),
        3 => {
            ctx.generated_program.unknown_count() > ctx.seed_program.unknown_count()
                || ctx.trace.contains(&MutationKind::CoupleVariables)
        }
        _ => false,
    };

    let notes = format!(
        "difficulty: {}; guardrails: {}; variant {}: {}; student {}; ops [{}]",
        pass_fail(difficulty_ok),
        pass_fail(guardrails_ok),
        ctx.variant.0,
        pass_fail(variant_ok),
        ctx.outcome
            .map(|o| if o.correct { "correct" } else { "incorrect" })
            .unwrap_or("unavailable"),
        ctx.trace
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(", "),
    );

    JudgeVerdict {
        difficulty_ok,
        guardrails_ok,
        variant_ok,
        notes,
    }
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

/// Chat-backed judgment: sends the criterion text and both artifacts and
/// expects `difficulty: pass|fail` and `guardrails: pass|fail` lines in the
/// reply. Any parse failure degrades to the programmatic verdict.
pub fn llm_judge(
    ctx: &JudgeContext<'_>,
    client: &dyn ChatClient,
    criterion_text: &str,
) -> JudgeVerdict {
    let programmatic = judge(ctx);
    let body = format!(
        "original:\n{}\n\ngenerated:\n{}\n\nstudent answer: {}\nreference answer: {}",
        crate::dsl::print_program(ctx.seed_program),
        crate::dsl::print_program(ctx.generated_program),
        ctx.outcome
            .and_then(|o| o.produced.as_ref())
            .map(|r| r.to_string())
            .unwrap_or_else(|| "refusal".into()),
        ctx.answer.map(|r| r.to_string()).unwrap_or_default(),
    );
    let request = ChatRequest::new(client.model_id())
        .system(criterion_text)
        .user(&body);
    let Ok(response) = client.complete(&request) else {
        return programmatic;
    };
    let mut difficulty = None;
    let mut guardrails = None;
    for line in response.content.lines() {
        let line = line.trim().to_ascii_lowercase();
        if let Some(rest) = line.strip_prefix("difficulty:") {
            difficulty = parse_pass_fail(rest);
        } else if let Some(rest) = line.strip_prefix("guardrails:") {
            guardrails = parse_pass_fail(rest);
        }
    }
    match (difficulty, guardrails) {
        (Some(difficulty_ok), Some(guardrails_ok)) => JudgeVerdict {
            difficulty_ok,
            guardrails_ok,
            variant_ok: programmatic.variant_ok,
            notes: response.content,
        },
        _ => programmatic,
    }
}

fn parse_pass_fail(text: &str) -> Option<bool> {
    match text.trim() {
        "pass" => Some(true),
        "fail" => Some(false),
        _ => None,
    }
}
