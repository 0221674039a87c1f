//! Uniform access to external model capabilities.
//!
//! A [`Gateway`] fronts one backend per capability (completion, embedding,
//! pair scoring, sequence loss, category distributions). It owns the
//! preconditions, per-profile concurrency bounds, transport retries, and
//! response repair, so callers see a small, validated surface. Backends are
//! either HTTP endpoints or the deterministic scripted implementations
//! selected by `mock://` urls. Gateways are immutable after construction and
//! safe to share across tasks.

mod backend;
mod http;
mod scripted;
mod types;

pub use backend::Backend;
pub use http::HttpBackend;
pub use scripted::{
    hash_embedding, CompletionRule, DistributionRule, EmbeddingRule, LossRule, MockTable,
    PairScoreRule, ScriptedBackend,
};
pub use types::{
    normalize_label, parse_distribution_text, BackendProfile, Capability, CategoryDistribution,
    Decoding, EmbeddingVector,
};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use tokio::sync::Semaphore;

use crate::config::BackendsConfig;
use crate::error::{Error, Result};

struct Slot {
    backend: Arc<dyn Backend>,
    limiter: Arc<Semaphore>,
    profile: BackendProfile,
    name: &'static str,
}

impl Slot {
    fn new(name: &'static str, profile: BackendProfile, backend: Arc<dyn Backend>) -> Self {
        let limiter = Arc::new(Semaphore::new(profile.max_parallel));
        Slot { backend, limiter, profile, name }
    }
}

/// One backend per capability, with validation, retries, and bounded parallelism.
pub struct Gateway {
    completion: Slot,
    embedding: Slot,
    pair_score: Slot,
    sequence_loss: Slot,
    category_distribution: Slot,
    embedding_dim: Option<usize>,
}

fn build_backend(name: &'static str, profile: &BackendProfile, mock_dir: Option<&Path>) -> Result<Arc<dyn Backend>> {
    profile.validate(name)?;
    if profile.url.starts_with("mock://") {
        Ok(Arc::new(ScriptedBackend::from_url(&profile.url, mock_dir)?))
    } else {
        Ok(Arc::new(HttpBackend::new(name, &profile.url, &profile.model, profile.timeout_ms)?))
    }
}

impl Gateway {
    /// Build all five capability slots from config.
    pub fn from_config(cfg: &BackendsConfig) -> Result<Self> {
        let dir = cfg.mock_dir.as_deref();
        Ok(Gateway {
            completion: Slot::new(
                "completion",
                cfg.completion.clone(),
                build_backend("completion", &cfg.completion, dir)?,
            ),
            embedding: Slot::new(
                "embedding",
                cfg.embedding.clone(),
                build_backend("embedding", &cfg.embedding, dir)?,
            ),
            pair_score: Slot::new(
                "pair_score",
                cfg.pair_score.clone(),
                build_backend("pair_score", &cfg.pair_score, dir)?,
            ),
            sequence_loss: Slot::new(
                "sequence_loss",
                cfg.sequence_loss.clone(),
                build_backend("sequence_loss", &cfg.sequence_loss, dir)?,
            ),
            category_distribution: Slot::new(
                "category_distribution",
                cfg.category_distribution.clone(),
                build_backend("category_distribution", &cfg.category_distribution, dir)?,
            ),
            embedding_dim: cfg.embedding_dim,
        })
    }

    /// Substitute a single capability's backend; used by tests to install
    /// counting or failing doubles behind the same gateway surface.
    pub fn with_backend(mut self, capability: Capability, backend: Arc<dyn Backend>) -> Self {
        let slot = match capability {
            Capability::Completion => &mut self.completion,
            Capability::Embedding => &mut self.embedding,
            Capability::PairScore => &mut self.pair_score,
            Capability::SequenceLoss => &mut self.sequence_loss,
            Capability::CategoryDistribution => &mut self.category_distribution,
        };
        slot.backend = backend;
        slot.limiter = Arc::new(Semaphore::new(slot.profile.max_parallel));
        self
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    /// True when every configured backend is scripted (`mock://`).
    pub fn fully_scripted(&self) -> bool {
        [
            &self.completion,
            &self.embedding,
            &self.pair_score,
            &self.sequence_loss,
            &self.category_distribution,
        ]
        .iter()
        .all(|s| s.profile.url.starts_with("mock://"))
    }

    /// Profile urls by capability name, for health reporting.
    pub fn profile_urls(&self) -> Vec<(&'static str, String)> {
        [
            &self.completion,
            &self.embedding,
            &self.pair_score,
            &self.sequence_loss,
            &self.category_distribution,
        ]
        .iter()
        .map(|s| (s.name, s.profile.url.clone()))
        .collect()
    }

    async fn with_retries<'a, T, F>(&self, slot: &'a Slot, mut call: F) -> Result<T>
    where
        F: FnMut(&'a Slot) -> futures::future::BoxFuture<'a, Result<T>>,
    {
        let _permit = slot
            .limiter
            .acquire()
            .await
            .map_err(|_| Error::Transport {
                profile: slot.name.to_string(),
                message: "request limiter closed".to_string(),
            })?;
        let mut attempt = 0;
        loop {
            match call(slot).await {
                Ok(value) => return Ok(value),
                Err(Error::Transport { profile, message }) if attempt < slot.profile.retry_limit => {
                    tracing::debug!(profile, attempt, "retrying after transport error: {message}");
                    attempt += 1;
                }
                Err(other) => return Err(other),
            }
        }
    }

    /// Text completion.
    pub async fn complete(&self, prompt: &str, decoding: &Decoding) -> Result<String> {
        if prompt.is_empty() {
            return Err(Error::InvalidArgument("complete: empty prompt".to_string()));
        }
        if decoding.max_tokens == 0 {
            return Err(Error::InvalidArgument("complete: max_tokens must be >= 1".to_string()));
        }
        let prompt = prompt.to_string();
        let decoding = *decoding;
        self.with_retries(&self.completion, move |slot| {
            let prompt = prompt.clone();
            Box::pin(async move { slot.backend.complete(&prompt, &decoding).await })
        })
        .await
    }

    /// Text embedding, validated against the configured dimension.
    pub async fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.is_empty() {
            return Err(Error::InvalidArgument("embed: empty text".to_string()));
        }
        let owned = text.to_string();
        let vector = self
            .with_retries(&self.embedding, move |slot| {
                let text = owned.clone();
                Box::pin(async move { slot.backend.embed(&text).await })
            })
            .await?;
        if let Some(expected) = self.embedding_dim {
            if vector.dim() != expected {
                return Err(Error::DimensionMismatch { expected, got: vector.dim() });
            }
        }
        Ok(vector)
    }

    /// Pairwise relevance of `doc` to `query`; higher is more relevant.
    pub async fn pair_score(&self, query: &str, doc: &str) -> Result<f64> {
        if query.is_empty() || doc.is_empty() {
            return Err(Error::InvalidArgument("pair_score: empty query or doc".to_string()));
        }
        let (query, doc) = (query.to_string(), doc.to_string());
        self.with_retries(&self.pair_score, move |slot| {
            let (query, doc) = (query.clone(), doc.clone());
            Box::pin(async move { slot.backend.pair_score(&query, &doc).await })
        })
        .await
    }

    /// Mean per-token NLL of `target` under `context`, nats/token, >= 0.
    pub async fn sequence_loss(&self, context: &str, target: &str) -> Result<f64> {
        if target.is_empty() {
            return Err(Error::InvalidArgument("sequence_loss: empty target".to_string()));
        }
        let (context, target) = (context.to_string(), target.to_string());
        self.with_retries(&self.sequence_loss, move |slot| {
            let (context, target) = (context.clone(), target.clone());
            Box::pin(async move { slot.backend.sequence_loss(&context, &target).await })
        })
        .await
    }

    /// Category distribution over `categories`. Malformed output triggers one
    /// stricter reprompt; a parseable subset is zero-filled and renormalized.
    pub async fn classify_distribution(
        &self,
        prompt: &str,
        categories: &[String],
    ) -> Result<CategoryDistribution> {
        if categories.is_empty() {
            return Err(Error::InvalidArgument("classify_distribution: no categories".to_string()));
        }
        let mut unique = std::collections::BTreeSet::new();
        for c in categories {
            if !unique.insert(normalize_label(c)) {
                return Err(Error::InvalidArgument(format!(
                    "classify_distribution: duplicate category `{c}`"
                )));
            }
        }

        let raw = self.distribution_call(prompt.to_string()).await;
        let normalized = match raw {
            Ok(map) => CategoryDistribution::normalized(&map, categories),
            Err(e @ Error::Transport { .. }) | Err(e @ Error::BackendRefused { .. }) => return Err(e),
            Err(_) => Err(Error::UnparseableDistribution { raw: "first attempt".to_string() }),
        };
        match normalized {
            Ok(dist) => Ok(dist),
            Err(Error::UnparseableDistribution { .. }) => {
                let reprompt = format!(
                    "{prompt}\n\nRespond with only a JSON object mapping every category name to a number."
                );
                let map = self.distribution_call(reprompt).await?;
                CategoryDistribution::normalized(&map, categories)
            }
            Err(other) => Err(other),
        }
    }

    async fn distribution_call(&self, prompt: String) -> Result<BTreeMap<String, f64>> {
        self.with_retries(&self.category_distribution, move |slot| {
            let prompt = prompt.clone();
            Box::pin(async move { slot.backend.classify_distribution(&prompt).await })
        })
        .await
    }
}
