//! Profiles, decoding parameters, and value types carried across the gateway.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One model capability the pipeline can require.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Completion,
    Embedding,
    PairScore,
    SequenceLoss,
    CategoryDistribution,
}

impl Capability {
    pub fn name(self) -> &'static str {
        match self {
            Capability::Completion => "completion",
            Capability::Embedding => "embedding",
            Capability::PairScore => "pair_score",
            Capability::SequenceLoss => "sequence_loss",
            Capability::CategoryDistribution => "category_distribution",
        }
    }
}

/// Connection settings for one backend. Each capability required by the
/// configured pipeline maps to exactly one profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendProfile {
    pub url: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
}

fn default_model() -> String {
    "default".to_string()
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_parallel() -> usize {
    4
}
fn default_retry_limit() -> u32 {
    1
}

impl BackendProfile {
    pub fn validate(&self, name: &str) -> Result<()> {
        if self.url.trim().is_empty() {
            return Err(Error::Config(format!("profile `{name}`: empty url")));
        }
        if self.timeout_ms == 0 {
            return Err(Error::Config(format!("profile `{name}`: timeout_ms must be > 0")));
        }
        if self.max_parallel == 0 {
            return Err(Error::Config(format!("profile `{name}`: max_parallel must be >= 1")));
        }
        Ok(())
    }
}

/// Decoding controls for completion requests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: u64,
}

impl Decoding {
    /// Short deterministic decode, for label-style outputs.
    pub fn label() -> Self {
        Decoding { max_tokens: 64, temperature: 0.0, seed: 0 }
    }

    /// Longer deterministic decode, for reformulations, CoT, and answers.
    pub fn text() -> Self {
        Decoding { max_tokens: 1024, temperature: 0.0, seed: 0 }
    }
}

/// Fixed-length embedding. The length is the dimension; unit norm is not assumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        EmbeddingVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }
}

/// Probability over a fixed category list; always normalized to sum 1 and
/// keyed by exactly the configured categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDistribution {
    probabilities: BTreeMap<String, f64>,
}

impl CategoryDistribution {
    /// Build from raw parsed values: unknown keys are dropped, missing
    /// configured categories are filled with zero, and the result is
    /// renormalized to sum exactly one. Errors when nothing usable parsed
    /// (no recognized key, or a non-positive total).
    pub fn normalized(raw: &BTreeMap<String, f64>, categories: &[String]) -> Result<Self> {
        let mut matched = BTreeMap::new();
        let mut any_key = false;
        for category in categories {
            let wanted = normalize_label(category);
            let mut value = 0.0;
            for (k, v) in raw {
                if normalize_label(k) == wanted {
                    value = *v;
                    any_key = true;
                    break;
                }
            }
            matched.insert(category.clone(), value.max(0.0));
        }
        let total: f64 = matched.values().sum();
        if !any_key || !(total > 0.0) || !total.is_finite() {
            return Err(Error::UnparseableDistribution {
                raw: format!("{raw:?}"),
            });
        }
        for v in matched.values_mut() {
            *v /= total;
        }
        Ok(CategoryDistribution { probabilities: matched })
    }

    pub fn probability(&self, category: &str) -> f64 {
        self.probabilities.get(category).copied().unwrap_or(0.0)
    }

    pub fn probabilities(&self) -> &BTreeMap<String, f64> {
        &self.probabilities
    }
}

/// Case/punctuation-insensitive label form used to match backend output
/// against enum names ("Cause-and-Effect" == "cause and effect").
pub fn normalize_label(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Pull a category→number map out of free-form completion text. Accepts the
/// first JSON object found (fenced or bare); values may be numbers or
/// numeric strings.
pub fn parse_distribution_text(text: &str) -> Option<BTreeMap<String, f64>> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end <= start {
        return None;
    }
    let value: serde_json::Value = serde_json::from_str(&text[start..=end]).ok()?;
    let object = value.as_object()?;
    let mut out = BTreeMap::new();
    for (k, v) in object {
        let parsed = match v {
            serde_json::Value::Number(n) => n.as_f64(),
            serde_json::Value::String(s) => s.trim().parse::<f64>().ok(),
            _ => None,
        };
        if let Some(p) = parsed {
            out.insert(k.clone(), p);
        }
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}
