//! Deterministic text realization of programs from themed templates.
//!
//! One sentence per declaration and constraint, instantiated from a seeded
//! theme, ending in exactly one question. The template grammar covers the
//! constructs problems actually use: assignment, proportion ("half of"),
//! product coupling ("the product of ... equals ..."), floor ("rounded
//! down to the nearest whole number"), transfer verbs, and comparisons.
//! Changing the seed changes actors, objects, and framing but never the
//! mathematics, which is what decouples linguistic surface from problem
//! structure.

use crate::clients::{ChatClient, ChatRequest, ClientError};
use crate::dsl::{print_program, Constraint, Item, Program, RelOp};
use crate::expr::Expr;
use crate::rational::Rational;
use crate::rng::{mix_seed, seed_from, Rng};
use crate::solver::{solve, SolveBudget};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct Theme {
    pub id: String,
    pub actors: Vec<String>,
    /// (singular, plural) noun pairs.
    pub items: Vec<(String, String)>,
    pub verbs_add: Vec<String>,
    pub verbs_remove: Vec<String>,
    pub verbs_split: Vec<String>,
    pub frames: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThemeLexicon {
    pub themes: Vec<Theme>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("no template for construct: {0}")]
    UnrenderableConstruct(String),
    #[error("program `{0}` has no unique answer; refusing to render")]
    NotSolvable(String),
    #[error("lexicon format error: {0}")]
    LexiconFormat(String),
}

const BUILTIN_THEMES: &str = include_str!("../data/themes.txt");

impl ThemeLexicon {
    /// The lexicon shipped with the crate (ten themes).
    pub fn builtin() -> Self {
        Self::from_text(BUILTIN_THEMES).expect("builtin lexicon parses")
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, RenderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RenderError::LexiconFormat(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Key-value records, one theme per blank-line-separated block.
    pub fn from_text(text: &str) -> Result<Self, RenderError> {
        let mut themes = Vec::new();
        let mut current: Option<Theme> = None;
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() {
                if let Some(t) = current.take() {
                    themes.push(t);
                }
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| RenderError::LexiconFormat(format!("missing `:` in {line:?}")))?;
            let value = value.trim();
            let alts = |v: &str| -> Vec<String> {
                v.split('|').map(|s| s.trim().to_string()).collect()
            };
            match key.trim() {
                "theme" => {
                    if let Some(t) = current.take() {
                        themes.push(t);
                    }
                    current = Some(Theme {
                        id: value.to_string(),
                        actors: vec![],
                        items: vec![],
                        verbs_add: vec![],
                        verbs_remove: vec![],
                        verbs_split: vec![],
                        frames: vec![],
                    });
                }
                other => {
                    let theme = current
                        .as_mut()
                        .ok_or_else(|| RenderError::LexiconFormat("field before theme:".into()))?;
                    match other {
                        "actors" => theme.actors = alts(value),
                        "items" => {
                            theme.items = alts(value)
                                .into_iter()
                                .map(|pair| {
                                    let (s, p) = pair.split_once('/').unwrap_or((&pair, &pair));
                                    (s.trim().to_string(), p.trim().to_string())
                                })
                                .collect()
                        }
                        "verbs_add" => theme.verbs_add = alts(value),
                        "verbs_remove" => theme.verbs_remove = alts(value),
                        "verbs_split" => theme.verbs_split = alts(value),
                        "frame" => theme.frames.push(value.to_string()),
                        unknown => {
                            return Err(RenderError::LexiconFormat(format!(
                                "unknown field `{unknown}`"
                            )))
                        }
                    }
                }
            }
        }
        if let Some(t) = current.take() {
            themes.push(t);
        }
        for t in &themes {
            if t.actors.is_empty() || t.items.is_empty() || t.frames.is_empty() {
                return Err(RenderError::LexiconFormat(format!(
                    "theme `{}` is missing actors, items, or a frame",
                    t.id
                )));
            }
        }
        Ok(ThemeLexicon { themes })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NumberStyle {
    /// Non-integers always as `a/b`.
    ExactFraction,
    /// Terminating decimals as decimals, everything else as `a/b`.
    #[default]
    DecimalWhenTerminating,
}

pub fn format_number(r: &Rational, style: NumberStyle) -> String {
    if r.is_integer() {
        return r.to_string();
    }
    match style {
        NumberStyle::ExactFraction => r.to_string(),
        NumberStyle::DecimalWhenTerminating => {
            r.to_decimal_string().unwrap_or_else(|| r.to_string())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rendering {
    pub nl_text: String,
    pub theme_id: String,
    pub word_count: usize,
    pub number_style: NumberStyle,
}

impl Rendering {
    fn from_text(nl_text: String, theme_id: &str, style: NumberStyle) -> Self {
        let word_count = nl_text.split_whitespace().count();
        Rendering {
            nl_text,
            theme_id: theme_id.to_string(),
            word_count,
            number_style: style,
        }
    }

    /// The single-question contract: exactly one `?`, at the very end.
    pub fn well_formed(&self) -> bool {
        self.nl_text.matches('?').count() == 1 && self.nl_text.trim_end().ends_with('?')
    }
}

/// Exact word-count ratio `generated / original` for the text-side length
/// guardrail.
pub fn nl_length_ratio(original_nl: &str, generated: &Rendering) -> Rational {
    let original = original_nl.split_whitespace().count().max(1);
    Rational::from_frac(generated.word_count as i64, original as i64)
}

/// Renders `p` under the theme selected by `theme_seed`. The program must
/// solve uniquely: unsolvable problems are never rendered.
pub fn render(p: &Program, lexicon: &ThemeLexicon, theme_seed: u64) -> Result<Rendering, RenderError> {
    if !solve(p, SolveBudget::default()).is_unique() {
        return Err(RenderError::NotSolvable(p.id.clone()));
    }
    let mut rng = Rng::new(mix_seed(theme_seed, &[&p.id, "render"]));
    let theme = rng.pick(&lexicon.themes);
    let actor = rng.pick(&theme.actors).clone();
    let (item_singular, item_plural) = rng.pick(&theme.items).clone();
    let verb_add = rng.pick(&theme.verbs_add).clone();
    let frame = rng.pick(&theme.frames).replace("{actor}", &actor);
    let style = NumberStyle::default();

    let ctx = SentenceContext {
        actor,
        item_singular,
        item_plural,
        verb_add,
        style,
    };

    let mut sentences = vec![frame];
    for item in &p.items {
        match item {
            Item::Const(c) => {
                let unit = c
                    .unit
                    .as_ref()
                    .map(|u| format!(" {u}"))
                    .unwrap_or_default();
                let noun = if c.value == Rational::one() {
                    &ctx.item_singular
                } else {
                    &ctx.item_plural
                };
                sentences.push(format!(
                    "{} {} {}{} of {} to begin with, the {}.",
                    ctx.actor,
                    ctx.verb_add,
                    format_number(&c.value, style),
                    unit,
                    noun,
                    words(&c.name),
                ));
            }
            Item::Let(l) => {
                sentences.push(format!(
                    "The {} comes to {}.",
                    words(&l.name),
                    phrase(&l.expr, &ctx),
                ));
            }
            Item::Var(v) => {
                let mut sentence = format!(
                    "Some whole number of {}, call it the {}, is involved",
                    ctx.item_plural,
                    words(&v.name),
                );
                if let Some((lo, hi)) = &v.bounds {
                    sentence.push_str(&format!(
                        ", somewhere from {} to {}",
                        format_number(lo, style),
                        format_number(hi, style)
                    ));
                }
                sentence.push('.');
                sentences.push(sentence);
                for w in &v.wheres {
                    sentences.push(format!("It holds that {}.", relation_phrase(w, &ctx)));
                }
            }
            Item::Constraint(c) => {
                sentences.push(format!("Also, {}.", relation_phrase(c, &ctx)));
            }
        }
    }
    sentences.push(format!(
        "After everything, how much is {}?",
        phrase(&p.answer, &ctx)
    ));

    let nl_text = sentences.join(" ");
    let rendering = Rendering::from_text(nl_text, &theme.id, style);
    debug_assert!(rendering.well_formed());
    Ok(rendering)
}

struct SentenceContext {
    actor: String,
    item_singular: String,
    item_plural: String,
    verb_add: String,
    style: NumberStyle,
}

/// Lowercases an identifier into a spoken phrase: `april_clips` reads as
/// "april clips".
fn words(name: &str) -> String {
    name.replace('_', " ")
}

fn relation_phrase(c: &Constraint, ctx: &SentenceContext) -> String {
    // special-case product coupling for a natural reading
    if c.rel == RelOp::Eq {
        if let Expr::Mul(a, b) = &c.lhs {
            return format!(
                "the product of {} and {} equals {}",
                phrase(a, ctx),
                phrase(b, ctx),
                phrase(&c.rhs, ctx)
            );
        }
    }
    let rel = match c.rel {
        RelOp::Eq => "equals",
        RelOp::Ne => "differs from",
        RelOp::Lt => "is less than",
        RelOp::Le => "is at most",
        RelOp::Gt => "is greater than",
        RelOp::Ge => "is at least",
    };
    format!("{} {} {}", phrase(&c.lhs, ctx), rel, phrase(&c.rhs, ctx))
}

fn phrase(e: &Expr, ctx: &SentenceContext) -> String {
    match e {
        Expr::Const(r) => format_number(r, ctx.style),
        Expr::Var(v) => format!("the {}", words(v)),
        Expr::Add(a, b) => format!("{} plus {}", phrase(a, ctx), phrase(b, ctx)),
        Expr::Sub(a, b) => format!("{} minus {}", phrase(a, ctx), phrase(b, ctx)),
        Expr::Mul(a, b) => format!("{} times {}", phrase(a, ctx), phrase(b, ctx)),
        Expr::Div(a, b) => match b.as_ref() {
            Expr::Const(c) if *c == Rational::from_int(2) => {
                format!("half of {}", phrase(a, ctx))
            }
            Expr::Const(c) if *c == Rational::from_int(3) => {
                format!("one third of {}", phrase(a, ctx))
            }
            Expr::Const(c) if *c == Rational::from_int(4) => {
                format!("one quarter of {}", phrase(a, ctx))
            }
            Expr::Const(c) if *c == Rational::from_int(5) => {
                format!("one fifth of {}", phrase(a, ctx))
            }
            _ => format!("{} divided by {}", phrase(a, ctx), phrase(b, ctx)),
        },
        Expr::Pow(a, 2) => format!("{} squared", phrase(a, ctx)),
        Expr::Pow(a, 3) => format!("{} cubed", phrase(a, ctx)),
        Expr::Pow(a, k) => format!("{} raised to the power {}", phrase(a, ctx), k),
        Expr::Floor(a) => format!(
            "{}, rounded down to the nearest whole number,",
            phrase(a, ctx)
        ),
        Expr::Mod(a, b) => format!(
            "the remainder when {} is divided by {}",
            phrase(a, ctx),
            phrase(b, ctx)
        ),
        Expr::Abs(a) => format!("the absolute value of {}", phrase(a, ctx)),
        Expr::Min(a, b) => format!("the smaller of {} and {}", phrase(a, ctx), phrase(b, ctx)),
        Expr::Max(a, b) => format!("the larger of {} and {}", phrase(a, ctx), phrase(b, ctx)),
        Expr::IfPositive(c, t, f) => format!(
            "{} when {} is positive and {} otherwise",
            phrase(t, ctx),
            phrase(c, ctx),
            phrase(f, ctx)
        ),
    }
}

/// Asks a chat model to render the program with the given prompt; replies
/// violating the single-question contract (or mentioning the reserved
/// variable) fall back to the template renderer.
pub fn llm_render(
    p: &Program,
    client: &dyn ChatClient,
    render_prompt: &str,
    lexicon: &ThemeLexicon,
) -> Result<Rendering, ClientError> {
    let request = ChatRequest::new(client.model_id())
        .system(render_prompt)
        .user(&print_program(p));
    let response = client.complete(&request)?;
    let text = response.content.trim().to_string();
    let candidate = Rendering::from_text(text, "llm", NumberStyle::default());
    let mentions_reserved = candidate
        .nl_text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .any(|w| w.eq_ignore_ascii_case("answer"));
    if candidate.well_formed() && !mentions_reserved {
        Ok(candidate)
    } else {
        render(p, lexicon, seed_from(&[&p.id, "llm-fallback"]))
            .map_err(|e| ClientError::Protocol(format!("reply rejected and fallback failed: {e}")))
    }
}
