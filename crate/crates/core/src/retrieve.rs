//! Hybrid dense+sparse retrieval into a deduplicated candidate set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusIndex;
use crate::error::{Error, Result};
use crate::formulate::ClassifiedQuery;
use crate::gateway::Gateway;

/// Which retrieval channel produced a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Dense,
    Sparse,
    Both,
}

/// One deduplicated retrieval hit. A doc retrieved by only one channel has
/// exactly one channel score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub doc_id: String,
    pub channel: Channel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparse_score: Option<f64>,
}

/// The unified candidate set for one iteration, ordered by doc_id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    pub query: ClassifiedQuery,
}

/// Per-channel retrieval depths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    #[serde(default = "default_top_n")]
    pub dense_top_n: usize,
    #[serde(default = "default_top_n")]
    pub sparse_top_n: usize,
}

fn default_top_n() -> usize {
    50
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { dense_top_n: default_top_n(), sparse_top_n: default_top_n() }
    }
}

/// Run both channels on the query's retrieval text and union the results.
/// Channel scores are kept separate; unified scoring happens in the coarse
/// reranker. Candidates come back in canonical doc_id order.
pub async fn hybrid_retrieve(
    query: &ClassifiedQuery,
    index: &CorpusIndex,
    cfg: &RetrievalConfig,
    gateway: &Gateway,
) -> Result<CandidateSet> {
    if query.reformulated.is_empty() {
        return Err(Error::InvalidArgument("hybrid_retrieve: empty reformulated text".to_string()));
    }
    let text = query.retrieval_text();
    let embedding = gateway.embed(&text).await?;
    let dense = index.dense_search(&embedding, cfg.dense_top_n)?;
    let sparse = index.sparse_search(&text, cfg.sparse_top_n)?;

    let mut merged: BTreeMap<String, Candidate> = BTreeMap::new();
    for (doc_id, score) in dense {
        merged.insert(
            doc_id.clone(),
            Candidate { doc_id, channel: Channel::Dense, dense_score: Some(score), sparse_score: None },
        );
    }
    for (doc_id, score) in sparse {
        merged
            .entry(doc_id.clone())
            .and_modify(|c| {
                c.channel = Channel::Both;
                c.sparse_score = Some(score);
            })
            .or_insert(Candidate {
                doc_id,
                channel: Channel::Sparse,
                dense_score: None,
                sparse_score: Some(score),
            });
    }
    Ok(CandidateSet { candidates: merged.into_values().collect(), query: query.clone() })
}
