//! Conflicting-fact detection over the coarse set, and hierarchy-based filtering.

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusIndex;
use crate::error::{Error, Result};
use crate::gateway::{Decoding, Gateway};
use crate::prompts::{render, PromptSet};
use crate::rerank::cache::RunCache;
use crate::rerank::{hierarchy_score, CoarseDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Conflict,
    Consistent,
}

/// One judged pair. Verdicts are symmetric; each unordered pair is judged once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictPair {
    pub doc_a: String,
    pub doc_b: String,
    pub verdict: Verdict,
    pub rationale: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub pairs: Vec<ConflictPair>,
}

impl ConflictReport {
    pub fn empty() -> Self {
        ConflictReport::default()
    }
}

/// Parse a judgment completion. "consistent" and "no conflict" count as
/// consistent; otherwise any mention of "conflict" counts as conflict.
/// Anything else is conservatively consistent, flagged in the rationale.
fn parse_verdict(raw: &str) -> (Verdict, String) {
    let lowered = raw.trim().to_ascii_lowercase();
    if lowered.contains("consistent") || lowered.contains("no conflict") {
        (Verdict::Consistent, raw.trim().to_string())
    } else if lowered.contains("conflict") {
        (Verdict::Conflict, raw.trim().to_string())
    } else {
        (Verdict::Consistent, format!("unparseable verdict, treated as consistent: {}", raw.trim()))
    }
}

/// Judge pairwise conflicts over at most `max_pairs` pairs, chosen by the
/// highest combined coarse score. Sets smaller than two yield an empty report.
pub async fn detect_conflicts(
    coarse: &[CoarseDoc],
    index: &CorpusIndex,
    gateway: &Gateway,
    prompts: &PromptSet,
    max_pairs: usize,
    cache: &RunCache,
) -> Result<ConflictReport> {
    if coarse.len() < 2 || max_pairs == 0 {
        return Ok(ConflictReport::empty());
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..coarse.len() {
        for j in (i + 1)..coarse.len() {
            pairs.push((i, j));
        }
    }
    pairs.sort_by(|x, y| {
        let sx = coarse[x.0].coarse_score + coarse[x.1].coarse_score;
        let sy = coarse[y.0].coarse_score + coarse[y.1].coarse_score;
        sy.partial_cmp(&sx)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| coarse[x.0].doc_id.cmp(&coarse[y.0].doc_id))
            .then_with(|| coarse[x.1].doc_id.cmp(&coarse[y.1].doc_id))
    });
    pairs.truncate(max_pairs);

    let mut report = ConflictReport::empty();
    for (i, j) in pairs {
        let (id_a, id_b) = (&coarse[i].doc_id, &coarse[j].doc_id);
        let (verdict, rationale) = match cache.verdict(id_a, id_b) {
            Some(hit) => hit,
            None => {
                let doc_a = index.get(id_a).ok_or_else(|| {
                    Error::InvalidArgument(format!("detect_conflicts: unknown doc `{id_a}`"))
                })?;
                let doc_b = index.get(id_b).ok_or_else(|| {
                    Error::InvalidArgument(format!("detect_conflicts: unknown doc `{id_b}`"))
                })?;
                let prompt = render(
                    &prompts.conflict,
                    &[("document_a", doc_a.text.as_str()), ("document_b", doc_b.text.as_str())],
                );
                let raw = gateway.complete(&prompt, &Decoding::label()).await?;
                let parsed = parse_verdict(&raw);
                cache.store_verdict(id_a, id_b, parsed.0, &parsed.1);
                parsed
            }
        };
        report.pairs.push(ConflictPair {
            doc_a: id_a.clone(),
            doc_b: id_b.clone(),
            verdict,
            rationale,
        });
    }
    Ok(report)
}

/// Why a document was dropped before fine reranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    Conflict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedDoc {
    pub doc_id: String,
    pub reason: FilterReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub retained: Vec<CoarseDoc>,
    pub removed: Vec<RemovedDoc>,
}

/// Drop the strictly lower-hierarchy member of every conflicting pair.
/// Equal levels retain both. Removal marks are computed independently per
/// pair, so chains (A over B, B over C) remove both B and C in one pass.
pub fn filter_conflicts(
    coarse: Vec<CoarseDoc>,
    report: &ConflictReport,
    index: &CorpusIndex,
) -> Result<FilterOutcome> {
    let mut removed_ids: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    for pair in &report.pairs {
        if pair.verdict != Verdict::Conflict {
            continue;
        }
        for id in [&pair.doc_a, &pair.doc_b] {
            if !coarse.iter().any(|c| &c.doc_id == id) {
                return Err(Error::InvalidArgument(format!(
                    "filter_conflicts: pair references `{id}` outside the coarse set"
                )));
            }
        }
        let level = |id: &str| -> Result<u8> {
            let doc = index
                .get(id)
                .ok_or_else(|| Error::InvalidArgument(format!("filter_conflicts: unknown doc `{id}`")))?;
            hierarchy_score(doc.evidence_level)
        };
        let fh_a = level(&pair.doc_a)?;
        let fh_b = level(&pair.doc_b)?;
        match fh_a.cmp(&fh_b) {
            std::cmp::Ordering::Less => {
                removed_ids.insert(pair.doc_a.clone());
            }
            std::cmp::Ordering::Greater => {
                removed_ids.insert(pair.doc_b.clone());
            }
            std::cmp::Ordering::Equal => {}
        }
    }
    let mut retained = Vec::with_capacity(coarse.len());
    let mut removed = Vec::new();
    for doc in coarse {
        if removed_ids.contains(&doc.doc_id) {
            removed.push(RemovedDoc { doc_id: doc.doc_id, reason: FilterReason::Conflict });
        } else {
            retained.push(doc);
        }
    }
    Ok(FilterOutcome { retained, removed })
}
