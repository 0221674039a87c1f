//! The single structured config document covering backends, corpus, loop,
//! reranking, and the projection map, with environment-variable overrides
//! for backend endpoints (`EBMRAG_BACKEND_<CAPABILITY>_URL`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::BackendProfile;
use crate::pipeline::LoopConfig;
use crate::prompts::PromptSet;
use crate::rerank::ProjectionMap;
use crate::retrieve::RetrievalConfig;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// One profile per capability; mock profiles read fixture tables from `mock_dir`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    /// Directory of JSON tables for `mock://table/<name>` profiles.
    #[serde(default)]
    pub mock_dir: Option<PathBuf>,
    /// Expected embedding dimension; mismatching backends are rejected.
    #[serde(default)]
    pub embedding_dim: Option<usize>,
    pub completion: BackendProfile,
    pub embedding: BackendProfile,
    pub pair_score: BackendProfile,
    pub sequence_loss: BackendProfile,
    pub category_distribution: BackendProfile,
}

impl BackendsConfig {
    /// All-scripted defaults: echo completion, hash embedding, overlap
    /// scoring, constant loss, uniform distributions. Used by tests and as
    /// a starting point for desk-scale runs.
    pub fn scripted_defaults(dim: usize) -> Self {
        let profile = |url: &str| BackendProfile {
            url: url.to_string(),
            model: "scripted".to_string(),
            timeout_ms: 5_000,
            max_parallel: 4,
            retry_limit: 1,
        };
        BackendsConfig {
            mock_dir: None,
            embedding_dim: Some(dim),
            completion: profile("mock://echo"),
            embedding: profile(&format!("mock://hash?dim={dim}")),
            pair_score: profile("mock://overlap"),
            sequence_loss: profile("mock://echo"),
            category_distribution: profile("mock://echo"),
        }
    }

    fn validate(&self) -> Result<()> {
        self.completion.validate("completion")?;
        self.embedding.validate("embedding")?;
        self.pair_score.validate("pair_score")?;
        self.sequence_loss.validate("sequence_loss")?;
        self.category_distribution.validate("category_distribution")?;
        Ok(())
    }

    /// Apply `EBMRAG_BACKEND_<NAME>_URL` overrides.
    fn apply_env_overrides(&mut self) {
        let overrides = [
            ("EBMRAG_BACKEND_COMPLETION_URL", &mut self.completion),
            ("EBMRAG_BACKEND_EMBEDDING_URL", &mut self.embedding),
            ("EBMRAG_BACKEND_PAIR_SCORE_URL", &mut self.pair_score),
            ("EBMRAG_BACKEND_SEQUENCE_LOSS_URL", &mut self.sequence_loss),
            ("EBMRAG_BACKEND_CATEGORY_DISTRIBUTION_URL", &mut self.category_distribution),
        ];
        for (var, profile) in overrides {
            if let Ok(url) = std::env::var(var) {
                if !url.is_empty() {
                    profile.url = url;
                }
            }
        }
    }
}

/// Segmentation and token-estimation settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    #[serde(default = "default_threshold")]
    pub segment_threshold_tokens: usize,
    #[serde(default = "default_ratio")]
    pub token_ratio: f64,
}

fn default_threshold() -> usize {
    10_000
}
fn default_ratio() -> f64 {
    1.3
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { segment_threshold_tokens: default_threshold(), token_ratio: default_ratio() }
    }
}

/// Coarse/fine reranking tunables.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankConfig {
    /// Coarse cut k.
    #[serde(default = "default_k_coarse")]
    pub k_coarse: usize,
    /// Usefulness weight α in the fine score.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Pair budget for conflict detection.
    #[serde(default = "default_max_pairs")]
    pub max_conflict_pairs: usize,
    #[serde(default = "default_true")]
    pub enable_conflict_filter: bool,
    #[serde(default = "default_true")]
    pub enable_fine_rerank: bool,
}

fn default_k_coarse() -> usize {
    20
}
fn default_alpha() -> f64 {
    1.0
}
fn default_max_pairs() -> usize {
    20
}
fn default_true() -> bool {
    true
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            k_coarse: default_k_coarse(),
            alpha: default_alpha(),
            max_conflict_pairs: default_max_pairs(),
            enable_conflict_filter: true,
            enable_fine_rerank: true,
        }
    }
}

/// Behaviour when query classification fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationFallback {
    /// Propagate the error (default).
    Error,
    /// Fall back to diagnosis/factual with a warning.
    Default,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormulationConfig {
    #[serde(default = "default_true")]
    pub enable_reformulation: bool,
    #[serde(default = "default_fallback")]
    pub classification_fallback: ClassificationFallback,
}

fn default_fallback() -> ClassificationFallback {
    ClassificationFallback::Error
}

impl Default for FormulationConfig {
    fn default() -> Self {
        FormulationConfig {
            enable_reformulation: true,
            classification_fallback: ClassificationFallback::Error,
        }
    }
}

/// How the final CoT enters the answer prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CotMode {
    /// As a worked demonstration block (default).
    Demonstration,
    /// As inline reasoning context.
    Inline,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerConfig {
    #[serde(default = "default_cot_mode")]
    pub cot_mode: CotMode,
    /// Number of few-shot demonstrations to prepend (taken from a shots
    /// file when one is provided; 0 disables).
    #[serde(default)]
    pub shots: usize,
}

fn default_cot_mode() -> CotMode {
    CotMode::Demonstration
}

impl Default for AnswerConfig {
    fn default() -> Self {
        AnswerConfig { cot_mode: default_cot_mode(), shots: 0 }
    }
}

/// The whole tunable surface of the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub backends: BackendsConfig,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub rerank: RerankConfig,
    #[serde(default, rename = "loop")]
    pub loop_: LoopConfig,
    #[serde(default)]
    pub formulation: FormulationConfig,
    #[serde(default)]
    pub answer: AnswerConfig,
    /// Question-type → document-category overrides; unlisted types keep the
    /// shipped default mapping.
    #[serde(default)]
    pub projection: BTreeMap<String, Vec<String>>,
    /// Directory of prompt-template overrides.
    #[serde(default)]
    pub prompt_dir: Option<PathBuf>,
}

fn default_format_version() -> u32 {
    CONFIG_FORMAT_VERSION
}

impl PipelineConfig {
    /// All-scripted config, mainly for tests.
    pub fn scripted(dim: usize) -> Self {
        PipelineConfig {
            format_version: CONFIG_FORMAT_VERSION,
            backends: BackendsConfig::scripted_defaults(dim),
            corpus: CorpusConfig::default(),
            retrieval: RetrievalConfig::default(),
            rerank: RerankConfig::default(),
            loop_: LoopConfig::default(),
            formulation: FormulationConfig::default(),
            answer: AnswerConfig::default(),
            projection: BTreeMap::new(),
            prompt_dir: None,
        }
    }

    /// Parse a TOML config file, resolve relative paths against its parent
    /// directory, apply env overrides, and validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                what: path.display().to_string(),
                expected: CONFIG_FORMAT_VERSION,
                found: cfg.format_version,
            });
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(dir) = &cfg.backends.mock_dir {
            if dir.is_relative() {
                cfg.backends.mock_dir = Some(base.join(dir));
            }
        }
        if let Some(dir) = &cfg.prompt_dir {
            if dir.is_relative() {
                cfg.prompt_dir = Some(base.join(dir));
            }
        }
        cfg.backends.apply_env_overrides();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.backends.validate()?;
        self.loop_.validate()?;
        if self.corpus.segment_threshold_tokens == 0 {
            return Err(Error::Config("corpus.segment_threshold_tokens must be >= 1".to_string()));
        }
        if !(self.corpus.token_ratio > 0.0) {
            return Err(Error::Config("corpus.token_ratio must be > 0".to_string()));
        }
        if self.retrieval.dense_top_n == 0 || self.retrieval.sparse_top_n == 0 {
            return Err(Error::Config("retrieval top_n values must be >= 1".to_string()));
        }
        if self.rerank.k_coarse == 0 {
            return Err(Error::Config("rerank.k_coarse must be >= 1".to_string()));
        }
        if self.rerank.alpha < 0.0 {
            return Err(Error::Config("rerank.alpha must be >= 0".to_string()));
        }
        self.projection_map()?;
        Ok(())
    }

    /// Resolved projection map (defaults plus config overrides).
    pub fn projection_map(&self) -> Result<ProjectionMap> {
        ProjectionMap::from_config(&self.projection)
    }

    /// Prompt set with any `prompt_dir` overrides applied.
    pub fn prompt_set(&self) -> Result<PromptSet> {
        match &self.prompt_dir {
            Some(dir) => PromptSet::from_dir(dir),
            None => Ok(PromptSet::default()),
        }
    }
}
