//! Coarse-to-fine evidence reranking.
//!
//! Coarse: a pairwise relevance scorer orders the unified candidate set and
//! keeps the top k. Fine: every surviving document is scored
//! `F = f_h · f_g · (1 + α · f_u)` where
//! - `f_h = 9 − (e − 1)` maps the 9-level evidence hierarchy so higher
//!   credibility scores higher,
//! - `f_u = max(ℓ_init − ℓ_x, 0)` is the clamped drop in a proxy model's
//!   loss on a reference answer when the document joins the context,
//! - `f_g` sums the document's category-membership probabilities over the
//!   categories expected for the question type.
//! The multiplicative form vetoes documents that fail any criterion.

mod cache;
mod conflict;

pub use cache::RunCache;
pub use conflict::{
    detect_conflicts, filter_conflicts, ConflictPair, ConflictReport, FilterOutcome, FilterReason,
    RemovedDoc, Verdict,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusIndex;
use crate::error::{Error, Result};
use crate::formulate::GeneralQuestionType;
use crate::gateway::{normalize_label, Decoding, Gateway};
use crate::prompts::{render, PromptSet};
use crate::retrieve::{CandidateSet, Channel};

/// The sixteen general document categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentCategory {
    Argumentation,
    Definition,
    Description,
    Explanation,
    Purpose,
    Narration,
    Process,
    Instruction,
    Command,
    ProblemSolving,
    Comparison,
    Evaluation,
    Classification,
    Condition,
    Prediction,
    CauseAndEffect,
}

impl DocumentCategory {
    pub const ALL: [DocumentCategory; 16] = [
        DocumentCategory::Argumentation,
        DocumentCategory::Definition,
        DocumentCategory::Description,
        DocumentCategory::Explanation,
        DocumentCategory::Purpose,
        DocumentCategory::Narration,
        DocumentCategory::Process,
        DocumentCategory::Instruction,
        DocumentCategory::Command,
        DocumentCategory::ProblemSolving,
        DocumentCategory::Comparison,
        DocumentCategory::Evaluation,
        DocumentCategory::Classification,
        DocumentCategory::Condition,
        DocumentCategory::Prediction,
        DocumentCategory::CauseAndEffect,
    ];

    /// Classifier-facing display name.
    pub fn as_str(self) -> &'static str {
        match self {
            DocumentCategory::Argumentation => "Argumentation",
            DocumentCategory::Definition => "Definition",
            DocumentCategory::Description => "Description",
            DocumentCategory::Explanation => "Explanation",
            DocumentCategory::Purpose => "Purpose",
            DocumentCategory::Narration => "Narration",
            DocumentCategory::Process => "Process",
            DocumentCategory::Instruction => "Instruction",
            DocumentCategory::Command => "Command",
            DocumentCategory::ProblemSolving => "Problem-Solving",
            DocumentCategory::Comparison => "Comparison",
            DocumentCategory::Evaluation => "Evaluation",
            DocumentCategory::Classification => "Classification",
            DocumentCategory::Condition => "Condition",
            DocumentCategory::Prediction => "Prediction",
            DocumentCategory::CauseAndEffect => "Cause-and-Effect",
        }
    }

    pub fn parse_label(label: &str) -> Option<Self> {
        let wanted = normalize_label(label);
        Self::ALL.into_iter().find(|c| normalize_label(c.as_str()) == wanted)
    }

    /// All sixteen display names, in enum order.
    pub fn display_names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.as_str().to_string()).collect()
    }
}

impl std::fmt::Display for DocumentCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Question-type → expected-document-category projection. Every question
/// type maps to a non-empty category set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionMap {
    map: BTreeMap<GeneralQuestionType, BTreeSet<DocumentCategory>>,
}

impl Default for ProjectionMap {
    fn default() -> Self {
        use DocumentCategory as D;
        use GeneralQuestionType as Q;
        let mut map = BTreeMap::new();
        let mut add = |q: Q, cats: &[D]| {
            map.insert(q, cats.iter().copied().collect::<BTreeSet<_>>());
        };
        add(Q::Factual, &[D::Description, D::Definition, D::Classification]);
        add(Q::Referential, &[D::Description, D::Narration]);
        add(Q::Definition, &[D::Definition, D::Description]);
        add(Q::Explanatory, &[D::Explanation, D::CauseAndEffect]);
        add(Q::Descriptive, &[D::Description, D::Narration]);
        add(Q::Directive, &[D::Instruction, D::Command, D::ProblemSolving]);
        add(Q::Opinion, &[D::Argumentation, D::Evaluation]);
        add(Q::Procedural, &[D::Process, D::Instruction, D::ProblemSolving]);
        add(Q::Comparative, &[D::Comparison, D::Evaluation]);
        add(Q::Evaluative, &[D::Evaluation, D::Argumentation]);
        add(Q::Verification, &[D::Argumentation, D::Evaluation]);
        add(Q::Hypothetical, &[D::Prediction, D::Condition, D::CauseAndEffect]);
        ProjectionMap { map }
    }
}

impl ProjectionMap {
    /// Build from config entries (question type name → category names).
    /// Types not listed keep their default mapping; listed types replace it.
    pub fn from_config(entries: &BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut projection = ProjectionMap::default();
        for (type_name, category_names) in entries {
            let question_type = GeneralQuestionType::parse_label(type_name).ok_or_else(|| {
                Error::Config(format!("projection: unknown question type `{type_name}`"))
            })?;
            if category_names.is_empty() {
                return Err(Error::Config(format!(
                    "projection: `{type_name}` must map to at least one category"
                )));
            }
            let mut set = BTreeSet::new();
            for name in category_names {
                let category = DocumentCategory::parse_label(name).ok_or_else(|| {
                    Error::Config(format!("projection: unknown document category `{name}`"))
                })?;
                set.insert(category);
            }
            projection.map.insert(question_type, set);
        }
        Ok(projection)
    }

    /// Expected categories for a question type. Total over the enum.
    pub fn expected(&self, question_type: GeneralQuestionType) -> &BTreeSet<DocumentCategory> {
        self.map.get(&question_type).expect("projection map is total over question types")
    }
}

/// Expected categories `C^e` for one classified query.
pub fn expected_categories(
    question_type: GeneralQuestionType,
    projection: &ProjectionMap,
) -> &BTreeSet<DocumentCategory> {
    projection.expected(question_type)
}

/// One coarse-set entry: doc id with its unified relevance score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseDoc {
    pub doc_id: String,
    pub channel: Channel,
    pub coarse_score: f64,
}

/// Hierarchy-of-evidence score: level 1 (highest credibility) scores 9,
/// level 9 scores 1.
pub fn hierarchy_score(evidence_level: u8) -> Result<u8> {
    if !(1..=9).contains(&evidence_level) {
        return Err(Error::InvalidEvidenceLevel { level: i64::from(evidence_level) });
    }
    Ok(9 - (evidence_level - 1))
}

/// Fine-grained score `F = f_h · f_g · (1 + α · f_u)`.
pub fn fine_score(f_h: u8, f_g: f64, f_u: f64, alpha: f64) -> f64 {
    f64::from(f_h) * f_g * (1.0 + alpha * f_u)
}

/// Clamped usefulness `max(ℓ_init − ℓ_x, 0)`.
pub fn usefulness(init_loss: f64, doc_loss: f64) -> f64 {
    (init_loss - doc_loss).max(0.0)
}

/// A fine-scored document. `filtered` stays `None` inside the fine set; it
/// marks documents dropped by conflict filtering when those are surfaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEvidence {
    pub doc_id: String,
    pub channel: Channel,
    pub coarse_score: f64,
    pub f_h: u8,
    pub f_u: f64,
    pub f_g: f64,
    pub fine_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filtered: Option<FilterReason>,
}

/// Score every candidate against the query and keep the top k, sorted by
/// descending score; ties prefer both-channel docs, then ascending doc_id.
pub async fn coarse_rerank(
    query_text: &str,
    candidates: &CandidateSet,
    k: usize,
    index: &CorpusIndex,
    gateway: &Gateway,
) -> Result<Vec<CoarseDoc>> {
    if k == 0 {
        return Err(Error::InvalidArgument("coarse_rerank: k must be >= 1".to_string()));
    }
    let score_futures = candidates.candidates.iter().map(|candidate| async {
        let doc = index.get(&candidate.doc_id).ok_or_else(|| {
            Error::InvalidArgument(format!("coarse_rerank: unknown doc `{}`", candidate.doc_id))
        })?;
        let score = gateway.pair_score(query_text, &doc.text).await?;
        Ok::<CoarseDoc, Error>(CoarseDoc {
            doc_id: candidate.doc_id.clone(),
            channel: candidate.channel,
            coarse_score: score,
        })
    });
    let mut scored: Vec<CoarseDoc> = futures::future::try_join_all(score_futures).await?;
    scored.sort_by(|a, b| {
        b.coarse_score
            .partial_cmp(&a.coarse_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| channel_rank(a.channel).cmp(&channel_rank(b.channel)))
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    scored.truncate(k);
    Ok(scored)
}

fn channel_rank(channel: Channel) -> u8 {
    match channel {
        Channel::Both => 0,
        Channel::Dense | Channel::Sparse => 1,
    }
}

/// One completion from the reference-answerer, cached per query for the run.
pub async fn reference_answer(
    query: &str,
    gateway: &Gateway,
    prompts: &PromptSet,
    cache: &RunCache,
) -> Result<String> {
    if query.is_empty() {
        return Err(Error::InvalidArgument("reference_answer: empty query".to_string()));
    }
    if let Some(hit) = cache.ref_answer(query) {
        return Ok(hit);
    }
    let prompt = render(&prompts.reference_answer, &[("question", query)]);
    let answer = gateway.complete(&prompt, &Decoding::text()).await?;
    cache.store_ref_answer(query, &answer);
    Ok(answer)
}

fn answer_context(prompts: &PromptSet, query: &str, doc_text: Option<&str>) -> String {
    let evidence_block = match doc_text {
        Some(text) => format!("Evidence: {text}\n\n"),
        None => String::new(),
    };
    render(
        &prompts.answer_context,
        &[("question", query), ("evidence_block", evidence_block.as_str())],
    )
}

/// Usefulness of one document: the clamped reduction in the proxy model's
/// loss on the reference answer. `ℓ_init` is computed once per query.
pub async fn score_usefulness(
    query: &str,
    ref_answer: &str,
    doc_text: &str,
    gateway: &Gateway,
    prompts: &PromptSet,
    cache: &RunCache,
) -> Result<f64> {
    if ref_answer.is_empty() {
        return Err(Error::InvalidArgument("score_usefulness: empty reference answer".to_string()));
    }
    let init_loss = match cache.init_loss(query) {
        Some(hit) => hit,
        None => {
            let loss = gateway.sequence_loss(&answer_context(prompts, query, None), ref_answer).await?;
            cache.store_init_loss(query, loss);
            loss
        }
    };
    let doc_loss = gateway
        .sequence_loss(&answer_context(prompts, query, Some(doc_text)), ref_answer)
        .await?;
    Ok(usefulness(init_loss, doc_loss))
}

/// Category-alignment score: the document's distribution is fetched once per
/// run and `f_g` sums the probabilities of the expected categories.
pub async fn score_doc_category(
    doc_id: &str,
    doc_text: &str,
    expected: &BTreeSet<DocumentCategory>,
    gateway: &Gateway,
    prompts: &PromptSet,
    cache: &RunCache,
) -> Result<f64> {
    if expected.is_empty() {
        return Err(Error::InvalidArgument("score_doc_category: empty expected set".to_string()));
    }
    let distribution = match cache.distribution(doc_id) {
        Some(hit) => hit,
        None => {
            let prompt = render(&prompts.doc_category, &[("document", doc_text)]);
            let dist =
                gateway.classify_distribution(&prompt, &DocumentCategory::display_names()).await?;
            cache.store_distribution(doc_id, &dist);
            dist
        }
    };
    Ok(expected.iter().map(|c| distribution.probability(c.as_str())).sum())
}

/// Query-level inputs shared by every fine-scored document.
pub struct FineContext<'a> {
    pub query: &'a str,
    pub ref_answer: &'a str,
    pub expected: &'a BTreeSet<DocumentCategory>,
}

/// Score all retained documents and sort by descending fine score, with ties
/// by descending coarse score then ascending doc_id. The output is a
/// permutation of the input.
pub async fn fine_rerank(
    retained: &[CoarseDoc],
    ctx: &FineContext<'_>,
    alpha: f64,
    index: &CorpusIndex,
    gateway: &Gateway,
    prompts: &PromptSet,
    cache: &RunCache,
) -> Result<Vec<ScoredEvidence>> {
    if alpha < 0.0 {
        return Err(Error::InvalidArgument("fine_rerank: alpha must be >= 0".to_string()));
    }
    let futures = retained.iter().map(|coarse| async move {
        let doc = index.get(&coarse.doc_id).ok_or_else(|| {
            Error::InvalidArgument(format!("fine_rerank: unknown doc `{}`", coarse.doc_id))
        })?;
        let f_h = hierarchy_score(doc.evidence_level)?;
        let (f_u, f_g) = futures::future::try_join(
            score_usefulness(ctx.query, ctx.ref_answer, &doc.text, gateway, prompts, cache),
            score_doc_category(&coarse.doc_id, &doc.text, ctx.expected, gateway, prompts, cache),
        )
        .await?;
        Ok::<ScoredEvidence, Error>(ScoredEvidence {
            doc_id: coarse.doc_id.clone(),
            channel: coarse.channel,
            coarse_score: coarse.coarse_score,
            f_h,
            f_u,
            f_g,
            fine_score: fine_score(f_h, f_g, f_u, alpha),
            filtered: None,
        })
    });
    let mut scored: Vec<ScoredEvidence> = futures::future::try_join_all(futures).await?;
    sort_fine(&mut scored);
    Ok(scored)
}

/// The documented fine ordering: fine score ↓, coarse score ↓, doc_id ↑.
pub fn sort_fine(scored: &mut [ScoredEvidence]) {
    scored.sort_by(|a, b| {
        b.fine_score
            .partial_cmp(&a.fine_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                b.coarse_score.partial_cmp(&a.coarse_score).unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
}
