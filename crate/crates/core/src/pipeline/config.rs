//! Run configuration and the prompt pack.
//!
//! Config files are plain `key = value` lines (# comments allowed),
//! mirroring the loop parameters plus optional client settings. The prompt
//! pack is a sectioned text file keyed by role; the crate ships a default
//! pack and accepts overrides from disk.

use crate::clients::{DifficultyVariant, Representation};
use crate::optim::LoopConfig;
use crate::rational::Rational;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {0}: expected `key = value`")]
    BadLine(usize),
    #[error("config key `{key}`: invalid value `{value}`")]
    BadValue { key: String, value: String },
    #[error("prompt pack is missing section `{0}`")]
    MissingPrompt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything a run needs: loop parameters plus client endpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineConfig {
    pub loop_config: LoopConfig,
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::BadLine(i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
            };
            match key {
                "max_iterations" => {
                    config.loop_config.max_iterations = value.parse().map_err(|_| bad())?
                }
                "batch_size" => config.loop_config.batch_size = value.parse().map_err(|_| bad())?,
                "stop_threshold" => {
                    config.loop_config.stop_threshold = match value {
                        "none" | "off" => None,
                        v => Some(Rational::parse(v).ok_or_else(bad)?),
                    }
                }
                "alpha" => config.loop_config.alpha = Rational::parse(value).ok_or_else(bad)?,
                "beta" => config.loop_config.beta = Rational::parse(value).ok_or_else(bad)?,
                "variant" => {
                    let v: u8 = value.parse().map_err(|_| bad())?;
                    if v > 3 {
                        return Err(bad());
                    }
                    config.loop_config.variant = DifficultyVariant(v);
                }
                "representation" => {
                    config.loop_config.representation = match value {
                        "sym" => Representation::Sym,
                        "nl" => Representation::Nl,
                        _ => return Err(bad()),
                    }
                }
                "endpoint" => config.endpoint = Some(value.to_string()),
                "model" => config.model = Some(value.to_string()),
                _ => return Err(bad()),
            }
        }
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text of the effective configuration, hashed into run
    /// manifests.
    pub fn canonical_text(&self) -> String {
        let lc = &self.loop_config;
        format!(
            "max_iterations = {}\nbatch_size = {}\nstop_threshold = {}\nalpha = {}\nbeta = {}\nvariant = {}\nrepresentation = {}\nendpoint = {}\nmodel = {}\n",
            lc.max_iterations,
            lc.batch_size,
            lc.stop_threshold
                .as_ref()
                .map(|r| r.to_string())
                .unwrap_or_else(|| "none".into()),
            lc.alpha,
            lc.beta,
            lc.variant.0,
            match lc.representation {
                Representation::Sym => "sym",
                Representation::Nl => "nl",
            },
            self.endpoint.as_deref().unwrap_or("-"),
            self.model.as_deref().unwrap_or("-"),
        )
    }
}

const BUILTIN_PROMPTS: &str = include_str!("../../data/prompts.txt");

/// Role-keyed prompt texts.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptPack {
    sections: BTreeMap<String, String>,
}

impl PromptPack {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_PROMPTS)
    }

    pub fn parse(text: &str) -> Self {
        let mut sections = BTreeMap::new();
        let mut key: Option<String> = None;
        let mut body = String::new();
        for line in text.lines() {
            if let Some(name) = line.strip_prefix("### ") {
                if let Some(k) = key.take() {
                    sections.insert(k, body.trim().to_string());
                }
                key = Some(name.trim().to_string());
                body.clear();
            } else if key.is_some() {
                body.push_str(line);
                body.push('\n');
            }
        }
        if let Some(k) = key {
            sections.insert(k, body.trim().to_string());
        }
        PromptPack { sections }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn get(&self, key: &str) -> Result<&str, ConfigError> {
        self.sections
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ConfigError::MissingPrompt(key.to_string()))
    }

    pub fn solve_prompt(&self) -> &str {
        self.sections.get("solve").map(String::as_str).unwrap_or_default()
    }

    pub fn render_prompt(&self) -> &str {
        self.sections.get("render").map(String::as_str).unwrap_or_default()
    }

    /// Difficulty criterion text for a variant: the base text, extended by
    /// the variant's additional instruction for variants 1..3.
    pub fn difficulty_text(&self, variant: DifficultyVariant) -> String {
        let base = self
            .sections
            .get("difficulty_base")
            .cloned()
            .unwrap_or_default();
        if variant.0 == 0 {
            return base;
        }
        let extra = self
            .sections
            .get(&format!("difficulty_{}", variant.0))
            .cloned()
            .unwrap_or_default();
        format!("{base} {extra}")
    }

    /// Initial generation prompt per representation.
    pub fn initial_prompt(&self, representation: Representation) -> &str {
        let key = match representation {
            Representation::Sym => "init_sym",
            Representation::Nl => "init_nl",
        };
        self.sections.get(key).map(String::as_str).unwrap_or("Modify this program")
    }
}
