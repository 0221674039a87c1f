//! Evidence packing, CoT generation, drift measurement, and the iterative
//! retrieval loop that ties every stage together.

mod answer;
mod run;

pub use answer::{answer, extract_option_letter, AnswerOutcome, DemoShot};
pub use run::{run_pipeline, Engine, PipelineError, RunOptions, Stage};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusIndex;
use crate::error::{Error, Result};
use crate::formulate::ClassifiedQuery;
use crate::gateway::{Decoding, Gateway};
use crate::prompts::{render, PromptSet};
use crate::rerank::{CoarseDoc, ScoredEvidence};

/// Iteration-loop tunables.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    /// Maximum iterations T.
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    /// Drift threshold δ; the loop stops when μ < δ. Embedding-scale
    /// dependent: recalibrate per embedder (see `calibrate-delta`).
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Context-window budget w, in estimated tokens.
    #[serde(default = "default_window")]
    pub window_tokens: usize,
    /// Generate CoT and fold it into reformulation from iteration 2 onward.
    #[serde(default = "default_true")]
    pub enable_cot: bool,
}

fn default_max_iterations() -> u32 {
    5
}
fn default_delta() -> f64 {
    6.85
}
fn default_window() -> usize {
    4096
}
fn default_true() -> bool {
    true
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iterations: default_max_iterations(),
            delta: default_delta(),
            window_tokens: default_window(),
            enable_cot: default_true(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("loop.max_iterations must be >= 1".to_string()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config("loop.delta must be > 0".to_string()));
        }
        Ok(())
    }
}

/// Why the loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    DriftConverged,
    MaxIterations,
}

/// Version stamp on every exported trace line.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

fn trace_schema_version() -> u32 {
    TRACE_SCHEMA_VERSION
}

/// One iteration's record. `drift` is present exactly from t = 2 onward; a
/// JSON `null` at t >= 2 encodes an undefined comparison (an empty coarse
/// set on either side), which the loop treats as +∞.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    #[serde(default = "trace_schema_version")]
    pub schema_version: u32,
    pub t: u32,
    pub classified_query: ClassifiedQuery,
    pub candidate_count: usize,
    pub coarse_set: Vec<CoarseDoc>,
    pub fine_set: Vec<ScoredEvidence>,
    pub packed_set: Vec<String>,
    pub cot: String,
    pub drift: Option<f64>,
    pub terminated_here: bool,
}

/// Final pipeline output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub final_packed: Vec<ScoredEvidence>,
    pub final_cot: String,
    pub traces: Vec<IterationTrace>,
    pub termination_reason: TerminationReason,
}

/// Greedy prefix of the fine ordering under the window budget: take docs in
/// order while cumulative estimate plus `overhead` fits; never reorder and
/// never skip ahead to fit a smaller document.
pub fn select_top_k(
    fine: &[ScoredEvidence],
    index: &CorpusIndex,
    window: usize,
    overhead: usize,
) -> Vec<String> {
    let mut packed = Vec::new();
    let mut used = overhead;
    for evidence in fine {
        let estimate = index.get(&evidence.doc_id).map(|d| d.token_estimate).unwrap_or(usize::MAX);
        match used.checked_add(estimate) {
            Some(total) if total <= window => {
                used = total;
                packed.push(evidence.doc_id.clone());
            }
            _ => break,
        }
    }
    packed
}

/// Generate the six-step chain-of-thought completion from the query and the
/// packed documents. An empty packed set omits the documents block entirely.
pub async fn generate_cot(
    query: &str,
    packed: &[String],
    index: &CorpusIndex,
    gateway: &Gateway,
    prompts: &PromptSet,
    context: Option<&str>,
) -> Result<String> {
    if query.is_empty() {
        return Err(Error::InvalidArgument("generate_cot: empty query".to_string()));
    }
    let context_block = match context {
        Some(c) if !c.is_empty() => format!("# Context\n{c}\n\n"),
        _ => String::new(),
    };
    let documents_block = if packed.is_empty() {
        String::new()
    } else {
        let mut block = String::from("\n# Retrieved Documents\n");
        for doc_id in packed {
            if let Some(doc) = index.get(doc_id) {
                block.push_str(&format!("[{}] {}\n{}\n", doc.doc_id, doc.title, doc.text));
            }
        }
        block
    };
    let prompt = render(
        &prompts.cot,
        &[
            ("context_block", context_block.as_str()),
            ("question", query),
            ("documents_block", documents_block.as_str()),
        ],
    );
    gateway.complete(&prompt, &Decoding::text()).await
}

/// Semantic drift between consecutive coarse sets: the Euclidean distance
/// between their mean document embeddings, using embeddings cached in the
/// index. Defined as +∞ when either set is empty, which forces continuation.
pub fn drift(prev: &[String], curr: &[String], index: &CorpusIndex) -> Result<f64> {
    if prev.is_empty() || curr.is_empty() {
        return Ok(f64::INFINITY);
    }
    let mean = |ids: &[String]| -> Result<Vec<f64>> {
        let mut sum = vec![0.0_f64; index.dim()];
        for id in ids {
            let embedding = index
                .embedding_of(id)
                .ok_or_else(|| Error::InvalidArgument(format!("drift: unknown doc `{id}`")))?;
            if embedding.dim() != sum.len() {
                return Err(Error::DimensionMismatch { expected: sum.len(), got: embedding.dim() });
            }
            for (acc, v) in sum.iter_mut().zip(embedding.values()) {
                *acc += f64::from(*v);
            }
        }
        let n = ids.len() as f64;
        for v in sum.iter_mut() {
            *v /= n;
        }
        Ok(sum)
    };
    let (prev_mean, curr_mean) = (mean(prev)?, mean(curr)?);
    let sum_sq: f64 = prev_mean
        .iter()
        .zip(curr_mean.iter())
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok(sum_sq.sqrt())
}
