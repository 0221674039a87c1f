//! The iterative retrieval loop: reformulate → retrieve → appraise → pack →
//! reason, repeated until the coarse set stabilizes or T is reached.

use thiserror::Error;

use crate::config::{ClassificationFallback, PipelineConfig};
use crate::corpus::{estimate_tokens, CorpusIndex};
use crate::error::Error as EngineError;
use crate::formulate::{
    classify_ebm, classify_general, reformulate, ClassifiedQuery, EBMCategory, GeneralQuestionType,
};
use crate::gateway::Gateway;
use crate::pipeline::{
    drift, generate_cot, select_top_k, IterationTrace, PipelineResult, TerminationReason,
};
use crate::prompts::PromptSet;
use crate::rerank::{
    coarse_rerank, detect_conflicts, expected_categories, filter_conflicts, fine_rerank,
    hierarchy_score, reference_answer, ConflictReport, FilterOutcome, FineContext, ProjectionMap,
    RunCache, ScoredEvidence,
};
use crate::retrieve::hybrid_retrieve;

/// Pipeline stage names used in structured errors and service responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Classification,
    Reformulation,
    Retrieval,
    CoarseRerank,
    ConflictDetection,
    FineRerank,
    CotGeneration,
    Drift,
    Answer,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Classification => "classification",
            Stage::Reformulation => "reformulation",
            Stage::Retrieval => "retrieval",
            Stage::CoarseRerank => "coarse_rerank",
            Stage::ConflictDetection => "conflict_detection",
            Stage::FineRerank => "fine_rerank",
            Stage::CotGeneration => "cot_generation",
            Stage::Drift => "drift",
            Stage::Answer => "answer",
        };
        f.write_str(name)
    }
}

/// A stage failure, naming where and when the pipeline stopped.
#[derive(Debug, Error)]
#[error("pipeline stage `{stage}` failed at iteration {iteration}: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    pub iteration: u32,
    #[source]
    pub source: EngineError,
}

impl PipelineError {
    fn at(stage: Stage, iteration: u32) -> impl FnOnce(EngineError) -> PipelineError {
        move |source| PipelineError { stage, iteration, source }
    }
}

/// Loop-control switches beyond the config.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Never drift-terminate; always run all T iterations (used by δ calibration).
    pub ignore_delta: bool,
}

/// Run the full iterative pipeline for one query.
///
/// Classification happens once; reformulation reruns every iteration,
/// consuming the previous iteration's CoT from t = 2 onward. Each iteration
/// retrieves, coarse-reranks to k, conflict-filters, fine-reranks, packs
/// under the window, and generates CoT. From t = 2 the drift μ between
/// consecutive coarse sets is compared against δ; the loop stops at the
/// first μ < δ or after T iterations.
pub async fn run_pipeline(
    query: &str,
    index: &CorpusIndex,
    cfg: &PipelineConfig,
    projection: &ProjectionMap,
    gateway: &Gateway,
    prompts: &PromptSet,
    opts: &RunOptions,
) -> Result<PipelineResult, PipelineError> {
    if query.trim().is_empty() {
        return Err(PipelineError {
            stage: Stage::Classification,
            iteration: 1,
            source: EngineError::InvalidArgument("run_pipeline: empty query".to_string()),
        });
    }
    let cache = RunCache::new();
    let needs_classes = cfg.formulation.enable_reformulation || cfg.rerank.enable_fine_rerank;
    let (ebm_category, question_type) = if needs_classes {
        classify_query(query, cfg, gateway, prompts).await?
    } else {
        (EBMCategory::Diagnosis, GeneralQuestionType::Factual)
    };

    let mut traces: Vec<IterationTrace> = Vec::new();
    let mut prev_coarse_ids: Vec<String> = Vec::new();
    let mut prev_cot: Option<String> = None;

    for t in 1..=cfg.loop_.max_iterations {
        let cot_augmentation = if t >= 2 {
            prev_cot.clone().filter(|c| !c.is_empty())
        } else {
            None
        };

        let reformulated = if cfg.formulation.enable_reformulation {
            reformulate(query, ebm_category, cot_augmentation.as_deref(), gateway, prompts)
                .await
                .map_err(PipelineError::at(Stage::Reformulation, t))?
                .text
        } else {
            query.to_string()
        };
        let classified = ClassifiedQuery::new(
            query,
            ebm_category,
            question_type,
            reformulated,
            cot_augmentation,
            t,
        )
        .map_err(PipelineError::at(Stage::Reformulation, t))?;

        let candidates = hybrid_retrieve(&classified, index, &cfg.retrieval, gateway)
            .await
            .map_err(PipelineError::at(Stage::Retrieval, t))?;
        let candidate_count = candidates.candidates.len();

        let coarse =
            coarse_rerank(&classified.reformulated, &candidates, cfg.rerank.k_coarse, index, gateway)
                .await
                .map_err(PipelineError::at(Stage::CoarseRerank, t))?;
        let coarse_ids: Vec<String> = coarse.iter().map(|c| c.doc_id.clone()).collect();

        let outcome = if cfg.rerank.enable_conflict_filter {
            let report = detect_conflicts(
                &coarse,
                index,
                gateway,
                prompts,
                cfg.rerank.max_conflict_pairs,
                &cache,
            )
            .await
            .map_err(PipelineError::at(Stage::ConflictDetection, t))?;
            filter_conflicts(coarse.clone(), &report, index)
                .map_err(PipelineError::at(Stage::ConflictDetection, t))?
        } else {
            FilterOutcome { retained: coarse.clone(), removed: Vec::new() }
        };

        let fine = if cfg.rerank.enable_fine_rerank {
            let ref_answer = reference_answer(query, gateway, prompts, &cache)
                .await
                .map_err(PipelineError::at(Stage::FineRerank, t))?;
            let expected = expected_categories(question_type, projection);
            let ctx = FineContext { query, ref_answer: &ref_answer, expected };
            fine_rerank(&outcome.retained, &ctx, cfg.rerank.alpha, index, gateway, prompts, &cache)
                .await
                .map_err(PipelineError::at(Stage::FineRerank, t))?
        } else {
            passthrough_fine(&outcome.retained, index, cfg.rerank.alpha)
                .map_err(PipelineError::at(Stage::FineRerank, t))?
        };

        let overhead = prompt_overhead(prompts, query, classified.cot_augmentation.as_deref(), cfg);
        let packed = select_top_k(&fine, index, cfg.loop_.window_tokens, overhead);

        let cot = if cfg.loop_.enable_cot {
            generate_cot(query, &packed, index, gateway, prompts, None)
                .await
                .map_err(PipelineError::at(Stage::CotGeneration, t))?
        } else {
            String::new()
        };

        let mu = if t >= 2 {
            Some(
                drift(&prev_coarse_ids, &coarse_ids, index)
                    .map_err(PipelineError::at(Stage::Drift, t))?,
            )
        } else {
            None
        };
        let terminated_here =
            !opts.ignore_delta && matches!(mu, Some(m) if m < cfg.loop_.delta);

        traces.push(IterationTrace {
            schema_version: crate::pipeline::TRACE_SCHEMA_VERSION,
            t,
            classified_query: classified,
            candidate_count,
            coarse_set: coarse,
            fine_set: fine.clone(),
            packed_set: packed.clone(),
            cot: cot.clone(),
            drift: mu,
            terminated_here,
        });

        if terminated_here {
            return Ok(assemble_result(traces, TerminationReason::DriftConverged));
        }
        prev_coarse_ids = coarse_ids;
        prev_cot = Some(cot);
    }
    Ok(assemble_result(traces, TerminationReason::MaxIterations))
}

async fn classify_query(
    query: &str,
    cfg: &PipelineConfig,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<(EBMCategory, GeneralQuestionType), PipelineError> {
    let ebm = classify_ebm(query, gateway, prompts).await;
    let general = classify_general(query, gateway, prompts).await;
    match (ebm, general) {
        (Ok(e), Ok(g)) => Ok((e, g)),
        (e, g) => {
            let source = e.err().or(g.err()).expect("at least one classification error");
            match cfg.formulation.classification_fallback {
                ClassificationFallback::Error => {
                    Err(PipelineError { stage: Stage::Classification, iteration: 1, source })
                }
                ClassificationFallback::Default => {
                    tracing::warn!(
                        "classification failed ({source}); falling back to diagnosis/factual"
                    );
                    Ok((EBMCategory::Diagnosis, GeneralQuestionType::Factual))
                }
            }
        }
    }
}

/// With fine reranking disabled the coarse order passes through unchanged;
/// scores carry f_u = f_g = 0, so F = 0 still satisfies the formula.
fn passthrough_fine(
    retained: &[crate::rerank::CoarseDoc],
    index: &CorpusIndex,
    alpha: f64,
) -> crate::error::Result<Vec<ScoredEvidence>> {
    let _ = alpha;
    retained
        .iter()
        .map(|coarse| {
            let doc = index.get(&coarse.doc_id).ok_or_else(|| {
                EngineError::InvalidArgument(format!("unknown doc `{}`", coarse.doc_id))
            })?;
            Ok(ScoredEvidence {
                doc_id: coarse.doc_id.clone(),
                channel: coarse.channel,
                coarse_score: coarse.coarse_score,
                f_h: hierarchy_score(doc.evidence_level)?,
                f_u: 0.0,
                f_g: 0.0,
                fine_score: 0.0,
                filtered: None,
            })
        })
        .collect()
}

/// Estimated token overhead of the final answer prompt: the fixed template
/// plus the question and the CoT text carried into this iteration.
fn prompt_overhead(
    prompts: &PromptSet,
    query: &str,
    cot: Option<&str>,
    cfg: &PipelineConfig,
) -> usize {
    let mut text = prompts.final_answer.clone();
    text.push_str(query);
    if let Some(cot) = cot {
        text.push_str(cot);
    }
    estimate_tokens(&text, cfg.corpus.token_ratio)
}

fn assemble_result(traces: Vec<IterationTrace>, reason: TerminationReason) -> PipelineResult {
    let last = traces.last().expect("loop ran at least one iteration");
    let final_packed: Vec<ScoredEvidence> = last
        .packed_set
        .iter()
        .filter_map(|id| last.fine_set.iter().find(|s| &s.doc_id == id).cloned())
        .collect();
    PipelineResult {
        final_packed,
        final_cot: last.cot.clone(),
        traces,
        termination_reason: reason,
    }
}

/// Convenience bundle for callers that run many queries against one index.
pub struct Engine {
    pub index: CorpusIndex,
    pub cfg: PipelineConfig,
    pub projection: ProjectionMap,
    pub gateway: Gateway,
    pub prompts: PromptSet,
}

impl Engine {
    pub fn new(index: CorpusIndex, cfg: PipelineConfig) -> crate::error::Result<Self> {
        let projection = cfg.projection_map()?;
        let gateway = Gateway::from_config(&cfg.backends)?;
        let prompts = cfg.prompt_set()?;
        Ok(Engine { index, cfg, projection, gateway, prompts })
    }

    pub async fn run(&self, query: &str, opts: &RunOptions) -> Result<PipelineResult, PipelineError> {
        run_pipeline(
            query,
            &self.index,
            &self.cfg,
            &self.projection,
            &self.gateway,
            &self.prompts,
            opts,
        )
        .await
    }

    /// Detached conflict report for one coarse set (operator tooling).
    pub async fn conflicts(
        &self,
        coarse: &[crate::rerank::CoarseDoc],
    ) -> crate::error::Result<ConflictReport> {
        let cache = RunCache::new();
        detect_conflicts(
            coarse,
            &self.index,
            &self.gateway,
            &self.prompts,
            self.cfg.rerank.max_conflict_pairs,
            &cache,
        )
        .await
    }
}
