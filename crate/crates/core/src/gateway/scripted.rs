//! Deterministic scripted backends, selected by `mock://` profile urls.
//!
//! Supported forms:
//! - `mock://echo` — completion that returns the text after the first
//!   `echo:` marker, or the whole prompt when no marker is present.
//! - `mock://hash?dim=N` — embedding from FNV-1a token bucket counts.
//! - `mock://overlap` — pair score = number of distinct shared lowercase tokens.
//! - `mock://table/<name>` — table-driven behaviour read from
//!   `<mock_dir>/<name>.json`; the table kind must match the profile capability.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::backend::Backend;
use crate::gateway::types::{Decoding, EmbeddingVector};

/// First-match substring rule for completions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionRule {
    pub contains: Vec<String>,
    pub response: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRule {
    pub contains: Vec<String>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairScoreRule {
    #[serde(default)]
    pub query_contains: Vec<String>,
    #[serde(default)]
    pub doc_contains: Vec<String>,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossRule {
    #[serde(default)]
    pub context_contains: Vec<String>,
    #[serde(default)]
    pub target_contains: Vec<String>,
    pub loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionRule {
    pub contains: Vec<String>,
    pub distribution: BTreeMap<String, f64>,
}

/// A JSON fixture table backing one `mock://table/<name>` profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockTable {
    Completion {
        #[serde(default)]
        rules: Vec<CompletionRule>,
        default: Option<String>,
    },
    Embedding {
        dim: usize,
        #[serde(default)]
        rules: Vec<EmbeddingRule>,
        /// Fall back to the hash embedding when no rule matches (default true).
        #[serde(default = "default_true")]
        hash_fallback: bool,
    },
    PairScore {
        #[serde(default)]
        rules: Vec<PairScoreRule>,
        #[serde(default)]
        default: f64,
    },
    SequenceLoss {
        #[serde(default)]
        rules: Vec<LossRule>,
        default: f64,
    },
    Distribution {
        #[serde(default)]
        rules: Vec<DistributionRule>,
        default: BTreeMap<String, f64>,
    },
}

fn default_true() -> bool {
    true
}

/// One scripted backend instance.
#[derive(Debug, Clone)]
pub enum ScriptedBackend {
    Echo,
    HashEmbed { dim: usize },
    Overlap,
    Table { name: String, table: MockTable },
}

impl ScriptedBackend {
    /// Parse a `mock://` url, loading fixture tables from `mock_dir`.
    pub fn from_url(url: &str, mock_dir: Option<&Path>) -> Result<Self> {
        let rest = url
            .strip_prefix("mock://")
            .ok_or_else(|| Error::Config(format!("not a mock url: {url}")))?;
        let (kind, arg) = match rest.split_once(['/', '?']) {
            Some((k, a)) => (k, Some(a)),
            None => (rest, None),
        };
        match kind {
            "echo" => Ok(ScriptedBackend::Echo),
            "overlap" => Ok(ScriptedBackend::Overlap),
            "hash" => {
                let dim = arg
                    .and_then(|a| a.strip_prefix("dim="))
                    .and_then(|d| d.parse::<usize>().ok())
                    .unwrap_or(64);
                if dim == 0 {
                    return Err(Error::Config(format!("mock hash embedding needs dim >= 1: {url}")));
                }
                Ok(ScriptedBackend::HashEmbed { dim })
            }
            "table" => {
                let name = arg
                    .filter(|a| !a.is_empty())
                    .ok_or_else(|| Error::Config(format!("mock table url needs a name: {url}")))?;
                let dir = mock_dir.ok_or_else(|| {
                    Error::Config(format!("profile `{url}` needs backends.mock_dir to be set"))
                })?;
                let file = if name.ends_with(".json") {
                    dir.join(name)
                } else {
                    dir.join(format!("{name}.json"))
                };
                let text = std::fs::read_to_string(&file).map_err(|e| Error::MockFixture {
                    name: name.to_string(),
                    message: format!("{}: {e}", file.display()),
                })?;
                let table: MockTable =
                    serde_json::from_str(&text).map_err(|e| Error::MockFixture {
                        name: name.to_string(),
                        message: e.to_string(),
                    })?;
                Ok(ScriptedBackend::Table { name: name.to_string(), table })
            }
            other => Err(Error::Config(format!("unknown mock backend kind `{other}` in {url}"))),
        }
    }

    /// Wrap an in-memory table, for tests that script behaviour directly.
    pub fn from_table(name: &str, table: MockTable) -> Self {
        ScriptedBackend::Table { name: name.to_string(), table }
    }

    fn unsupported(&self, what: &str) -> Error {
        Error::Config(format!("scripted backend {self:?} does not support {what}"))
    }
}

/// Distinct lowercase tokens, split on non-alphanumeric characters.
fn token_set(text: &str) -> std::collections::BTreeSet<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
        .collect()
}

fn fnv1a(token: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in token.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Bag-of-tokens hash embedding: each token increments one of `dim` buckets.
pub fn hash_embedding(text: &str, dim: usize) -> EmbeddingVector {
    let mut values = vec![0.0_f32; dim];
    for token in text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let bucket = (fnv1a(&token.to_ascii_lowercase()) % dim as u64) as usize;
        values[bucket] += 1.0;
    }
    EmbeddingVector::new(values)
}

fn matches_all(haystack: &str, needles: &[String]) -> bool {
    needles.iter().all(|n| haystack.contains(n.as_str()))
}

#[async_trait::async_trait]
impl Backend for ScriptedBackend {
    async fn complete(&self, prompt: &str, _decoding: &Decoding) -> Result<String> {
        match self {
            ScriptedBackend::Echo => Ok(match prompt.find("echo:") {
                Some(i) => prompt[i + "echo:".len()..].to_string(),
                None => prompt.to_string(),
            }),
            ScriptedBackend::Table { name, table } => match table {
                MockTable::Completion { rules, default } => rules
                    .iter()
                    .find(|r| matches_all(prompt, &r.contains))
                    .map(|r| r.response.clone())
                    .or_else(|| default.clone())
                    .ok_or_else(|| Error::MockFixture {
                        name: name.clone(),
                        message: "no completion rule matched and no default set".to_string(),
                    }),
                _ => Err(self.unsupported("complete")),
            },
            _ => Err(self.unsupported("complete")),
        }
    }

    async fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        match self {
            ScriptedBackend::HashEmbed { dim } => Ok(hash_embedding(text, *dim)),
            ScriptedBackend::Table { table, .. } => match table {
                MockTable::Embedding { dim, rules, hash_fallback } => {
                    if let Some(rule) = rules.iter().find(|r| matches_all(text, &r.contains)) {
                        return Ok(EmbeddingVector::new(rule.values.clone()));
                    }
                    if *hash_fallback {
                        Ok(hash_embedding(text, *dim))
                    } else {
                        Ok(EmbeddingVector::new(vec![0.0; *dim]))
                    }
                }
                _ => Err(self.unsupported("embed")),
            },
            _ => Err(self.unsupported("embed")),
        }
    }

    async fn pair_score(&self, query: &str, doc: &str) -> Result<f64> {
        match self {
            ScriptedBackend::Overlap => {
                let q = token_set(query);
                let d = token_set(doc);
                Ok(q.intersection(&d).count() as f64)
            }
            ScriptedBackend::Table { table, .. } => match table {
                MockTable::PairScore { rules, default } => Ok(rules
                    .iter()
                    .find(|r| matches_all(query, &r.query_contains) && matches_all(doc, &r.doc_contains))
                    .map(|r| r.score)
                    .unwrap_or(*default)),
                _ => Err(self.unsupported("pair_score")),
            },
            _ => Err(self.unsupported("pair_score")),
        }
    }

    async fn sequence_loss(&self, context: &str, target: &str) -> Result<f64> {
        match self {
            ScriptedBackend::Table { table, .. } => match table {
                MockTable::SequenceLoss { rules, default } => Ok(rules
                    .iter()
                    .find(|r| {
                        matches_all(context, &r.context_contains)
                            && matches_all(target, &r.target_contains)
                    })
                    .map(|r| r.loss)
                    .unwrap_or(*default)),
                _ => Err(self.unsupported("sequence_loss")),
            },
            _ => Err(self.unsupported("sequence_loss")),
        }
    }

    async fn classify_distribution(&self, text: &str) -> Result<BTreeMap<String, f64>> {
        match self {
            ScriptedBackend::Table { table, .. } => match table {
                MockTable::Distribution { rules, default } => Ok(rules
                    .iter()
                    .find(|r| matches_all(text, &r.contains))
                    .map(|r| r.distribution.clone())
                    .unwrap_or_else(|| default.clone())),
                _ => Err(self.unsupported("classify_distribution")),
            },
            _ => Err(self.unsupported("classify_distribution")),
        }
    }
}
