//! Evidence documents and the dual dense/sparse corpus index.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{normalize_label, Decoding, EmbeddingVector, Gateway};
use crate::prompts::{render, PromptSet};

/// The four resource types of the knowledge corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceType {
    AcademicPaper,
    Entry,
    Book,
    Guideline,
}

/// Ordered names of the nine evidence levels, highest credibility first.
pub const EVIDENCE_LEVEL_NAMES: [&str; 9] = [
    "Meta-Analyses",
    "Systematic Reviews",
    "Evidence-Based Practice Guidelines",
    "Randomized Controlled Trials",
    "Non-Randomized Controlled Trials",
    "Cohort Studies",
    "Case Series or Studies",
    "Individual Case Reports",
    "Expert Opinion",
];

/// Evidence level pinned to every guideline-sourced document.
pub const GUIDELINE_EVIDENCE_LEVEL: u8 = 3;

/// Parse an evidence level name to its ordinal (1..=9).
pub fn parse_evidence_level(label: &str) -> Option<u8> {
    let wanted = normalize_label(label);
    EVIDENCE_LEVEL_NAMES
        .iter()
        .position(|name| normalize_label(name) == wanted)
        .map(|i| (i + 1) as u8)
}

/// One segmented, evidence-annotated corpus unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceDocument {
    pub doc_id: String,
    pub source_type: SourceType,
    pub title: String,
    pub text: String,
    pub token_estimate: usize,
    pub evidence_level: u8,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// Assign the document's evidence level. Guideline sources are pinned to
/// level 3 without a backend call; anything else is judged by the
/// completion backend and the returned level name is mapped to its ordinal.
/// Unrecognized labels fall back to level 9 with a warning flag in metadata.
pub async fn annotate_evidence_level(
    mut doc: EvidenceDocument,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<EvidenceDocument> {
    if doc.text.is_empty() {
        return Err(Error::InvalidArgument("annotate_evidence_level: empty text".to_string()));
    }
    if doc.source_type == SourceType::Guideline {
        doc.evidence_level = GUIDELINE_EVIDENCE_LEVEL;
        return Ok(doc);
    }
    let prompt = render(&prompts.evidence_level, &[("document", doc.text.as_str())]);
    let label = gateway.complete(&prompt, &Decoding::label()).await?;
    match parse_evidence_level(label.trim()) {
        Some(level) => doc.evidence_level = level,
        None => {
            doc.evidence_level = 9;
            doc.metadata.insert(
                "evidence_level_warning".to_string(),
                format!("unrecognized evidence label: {}", label.trim()),
            );
        }
    }
    Ok(doc)
}

/// Lowercase alphanumeric terms for the lexical index.
pub fn lex_terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
}

#[derive(Debug, Clone, Default)]
struct Postings {
    /// (doc index, term frequency), ascending by doc index.
    entries: Vec<(u32, u32)>,
}

/// Immutable dual index: exact-cosine flat vectors plus a tf·idf inverted
/// index over the same document set. Safe for unlimited concurrent readers.
pub struct CorpusIndex {
    docs: Vec<EvidenceDocument>,
    embeddings: Vec<EmbeddingVector>,
    by_id: HashMap<String, usize>,
    inverted: HashMap<String, Postings>,
    dim: usize,
}

impl CorpusIndex {
    /// Embed every document through the gateway and build both indexes.
    pub async fn build(docs: Vec<EvidenceDocument>, gateway: &Gateway) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::InvalidArgument("build_index: no documents".to_string()));
        }
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if by_id.insert(doc.doc_id.clone(), i).is_some() {
                return Err(Error::DuplicateDocId { doc_id: doc.doc_id.clone() });
            }
        }
        let embeds = futures::future::join_all(docs.iter().map(|d| gateway.embed(&d.text))).await;
        let mut embeddings = Vec::with_capacity(docs.len());
        for e in embeds {
            embeddings.push(e?);
        }
        Self::assemble(docs, embeddings, by_id)
    }

    /// Assemble from documents plus precomputed embeddings, row i of
    /// `embeddings` belonging to `docs[i]`.
    pub fn from_parts(docs: Vec<EvidenceDocument>, embeddings: Vec<EmbeddingVector>) -> Result<Self> {
        if docs.len() != embeddings.len() {
            return Err(Error::InvalidArgument(format!(
                "from_parts: {} docs but {} embeddings",
                docs.len(),
                embeddings.len()
            )));
        }
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if by_id.insert(doc.doc_id.clone(), i).is_some() {
                return Err(Error::DuplicateDocId { doc_id: doc.doc_id.clone() });
            }
        }
        Self::assemble(docs, embeddings, by_id)
    }

    /// Assemble from documents plus precomputed embeddings (load path).
    pub(crate) fn assemble(
        docs: Vec<EvidenceDocument>,
        embeddings: Vec<EmbeddingVector>,
        by_id: HashMap<String, usize>,
    ) -> Result<Self> {
        let dim = embeddings.first().map(EmbeddingVector::dim).unwrap_or(0);
        for e in &embeddings {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: e.dim() });
            }
        }
        let mut inverted: HashMap<String, Postings> = HashMap::new();
        for (i, doc) in docs.iter().enumerate() {
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for term in lex_terms(&doc.text) {
                *counts.entry(term).or_insert(0) += 1;
            }
            for (term, tf) in counts {
                inverted.entry(term).or_default().entries.push((i as u32, tf));
            }
        }
        Ok(CorpusIndex { docs, embeddings, by_id, inverted, dim })
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn docs(&self) -> &[EvidenceDocument] {
        &self.docs
    }

    pub fn get(&self, doc_id: &str) -> Option<&EvidenceDocument> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn embedding_of(&self, doc_id: &str) -> Option<&EmbeddingVector> {
        self.by_id.get(doc_id).map(|&i| &self.embeddings[i])
    }

    pub(crate) fn embeddings(&self) -> &[EmbeddingVector] {
        &self.embeddings
    }

    /// Exact cosine search over every document. Results are sorted by
    /// descending score, ties broken by ascending doc_id, truncated to `top_n`.
    pub fn dense_search(&self, query: &EmbeddingVector, top_n: usize) -> Result<Vec<(String, f64)>> {
        if top_n == 0 {
            return Err(Error::InvalidArgument("dense_search: top_n must be >= 1".to_string()));
        }
        if self.docs.is_empty() {
            return Ok(Vec::new());
        }
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: query.dim() });
        }
        let mut scored: Vec<(usize, f64)> = self
            .embeddings
            .iter()
            .enumerate()
            .map(|(i, e)| (i, cosine(query.values(), e.values())))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.docs[a.0].doc_id.cmp(&self.docs[b.0].doc_id))
        });
        scored.truncate(top_n);
        Ok(scored.into_iter().map(|(i, s)| (self.docs[i].doc_id.clone(), s)).collect())
    }

    /// tf·idf search with idf = ln(1 + N/df). The query is treated as a set:
    /// duplicate query terms do not double-count. Documents matching no term
    /// are omitted, so a query with no corpus terms yields an empty list.
    pub fn sparse_search(&self, query_text: &str, top_n: usize) -> Result<Vec<(String, f64)>> {
        if top_n == 0 {
            return Err(Error::InvalidArgument("sparse_search: top_n must be >= 1".to_string()));
        }
        let terms: std::collections::BTreeSet<String> = lex_terms(query_text).collect();
        let n = self.docs.len() as f64;
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            if let Some(postings) = self.inverted.get(term) {
                let df = postings.entries.len() as f64;
                let idf = (1.0 + n / df).ln();
                for &(doc, tf) in &postings.entries {
                    *scores.entry(doc).or_insert(0.0) += f64::from(tf) * idf;
                }
            }
        }
        let mut scored: Vec<(u32, f64)> = scores.into_iter().filter(|(_, s)| *s > 0.0).collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.docs[a.0 as usize].doc_id.cmp(&self.docs[b.0 as usize].doc_id))
        });
        scored.truncate(top_n);
        Ok(scored.into_iter().map(|(i, s)| (self.docs[i as usize].doc_id.clone(), s)).collect())
    }
}

/// Cosine similarity in f64; zero-norm vectors score 0.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0_f64;
    let mut na = 0.0_f64;
    let mut nb = 0.0_f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}
