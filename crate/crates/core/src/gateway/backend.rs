//! The raw capability surface a backend must provide.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::gateway::types::{Decoding, EmbeddingVector};

/// Raw model operations, before the gateway's validation, retries, and
/// concurrency bounds are applied. A backend only has to implement the
/// method matching its profile's capability.
#[async_trait::async_trait]
pub trait Backend: Send + Sync {
    async fn complete(&self, prompt: &str, decoding: &Decoding) -> Result<String>;

    async fn embed(&self, text: &str) -> Result<EmbeddingVector>;

    async fn pair_score(&self, query: &str, doc: &str) -> Result<f64>;

    /// Mean per-token negative log-likelihood of `target` given `context`, in nats.
    async fn sequence_loss(&self, context: &str, target: &str) -> Result<f64>;

    /// Raw category→probability map as the backend reported it; the gateway
    /// normalizes and validates against the configured category list.
    async fn classify_distribution(&self, text: &str) -> Result<BTreeMap<String, f64>>;
}
