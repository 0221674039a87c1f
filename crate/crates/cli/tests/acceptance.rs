//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Criteria covered:
//!  1. fine-score formula vs an independent oracle, 1000 random tuples, exact;
//!  2. fine-rerank ordering vs brute force on 100 random scripted fixtures;
//!  3. usefulness clamp and identity;
//!  4. hierarchy boundaries and guideline pinning;
//!  5. category-score summation;
//!  6. drift arithmetic;
//!  7. loop control (convergence, exhaustion, CoT gating);
//!  8. segmentation of an oversized chapterless body;
//!  9. conflict filtering by evidence level;
//! 10. directional end-to-end: full pipeline vs vanilla RAG gold recall;
//! 11. byte-identical eval reports and traces across consecutive CLI runs;
//! 12. service contract (response shape, 400 on malformed, 50 concurrent asks).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ebmrag_core::config::{BackendsConfig, PipelineConfig};
use ebmrag_core::corpus::{
    annotate_evidence_level, estimate_tokens, ingest, read_corpus_jsonl, segment, CorpusIndex,
    EvidenceDocument, SourceType,
};
use ebmrag_core::gateway::{
    Backend, Capability, CompletionRule, Decoding, EmbeddingVector, Gateway, MockTable,
    ScriptedBackend,
};
use ebmrag_core::pipeline::{drift, run_pipeline, RunOptions, TerminationReason};
use ebmrag_core::prompts::PromptSet;
use ebmrag_core::rerank::{
    detect_conflicts, filter_conflicts, fine_rerank, fine_score, hierarchy_score,
    score_doc_category, score_usefulness, usefulness, CoarseDoc, DocumentCategory, FineContext,
    ProjectionMap, RunCache, Verdict,
};
use ebmrag_core::retrieve::Channel;

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo")
}

fn ebmrag_bin() -> &'static str {
    env!("CARGO_BIN_EXE_ebmrag")
}

/// Criterion 1: engine fine score equals an independently coded oracle on
/// 1000 random tuples, exactly, in under a second.
#[test]
fn criterion_01_fine_score_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let alphas = [0.0, 0.5, 1.0, 2.0];
    for _ in 0..1000 {
        let e: u8 = rng.gen_range(1..=9);
        let f_u: f64 = rng.gen_range(0.0..=10.0);
        let f_g: f64 = rng.gen_range(0.0..=1.0);
        let alpha = alphas[rng.gen_range(0..4)];
        // Oracle: straight from the definitions, no engine helpers.
        let oracle = ((9 - (e - 1)) as f64) * f_g * (1.0 + alpha * f_u);
        let engine = fine_score(hierarchy_score(e).unwrap(), f_g, f_u, alpha);
        assert_eq!(engine, oracle, "e={e} f_u={f_u} f_g={f_g} alpha={alpha}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("ACCEPTANCE 1 fine-score oracle (1000 tuples, exact, {elapsed:?}): PASS");
}

/// Scripted scorer for criterion 2: per-document losses and category
/// probabilities drawn from exact-in-binary values.
struct TableScores {
    losses: BTreeMap<String, f64>,
    explanation_prob: BTreeMap<String, f64>,
}

#[async_trait::async_trait]
impl Backend for TableScores {
    async fn complete(&self, _: &str, _: &Decoding) -> ebmrag_core::Result<String> {
        Ok("ref".into())
    }
    async fn embed(&self, _: &str) -> ebmrag_core::Result<EmbeddingVector> {
        unreachable!()
    }
    async fn pair_score(&self, _: &str, _: &str) -> ebmrag_core::Result<f64> {
        unreachable!()
    }
    async fn sequence_loss(&self, context: &str, _: &str) -> ebmrag_core::Result<f64> {
        for (marker, loss) in &self.losses {
            if context.contains(marker) {
                return Ok(*loss);
            }
        }
        Ok(3.0)
    }
    async fn classify_distribution(
        &self,
        text: &str,
    ) -> ebmrag_core::Result<BTreeMap<String, f64>> {
        for (marker, p) in &self.explanation_prob {
            if text.contains(marker) {
                return Ok(BTreeMap::from([
                    ("Explanation".to_string(), *p),
                    ("Narration".to_string(), 1.0 - *p),
                ]));
            }
        }
        Ok(BTreeMap::from([("Narration".to_string(), 1.0)]))
    }
}

fn doc_with(id: &str, text: &str, level: u8) -> EvidenceDocument {
    EvidenceDocument {
        doc_id: id.to_string(),
        source_type: SourceType::Entry,
        title: id.to_string(),
        text: text.to_string(),
        token_estimate: estimate_tokens(text, 1.3),
        evidence_level: level,
        metadata: BTreeMap::new(),
    }
}

/// Criterion 2: fine_rerank equals a brute-force score-and-sort oracle with
/// the documented tie-break, over 100 random fixtures of up to 200 docs.
#[test]
fn criterion_02_ordering_oracle() {
    let started = Instant::now();
    let runtime = tokio::runtime::Builder::new_current_thread().build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let probs = [0.0, 0.25, 0.5, 0.75, 1.0];
    let loss_steps = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];
    let coarse_steps = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25];

    for case in 0..100 {
        let doc_count = rng.gen_range(1..=200);
        let mut docs = Vec::new();
        let mut losses = BTreeMap::new();
        let mut explanation_prob = BTreeMap::new();
        let mut coarse = Vec::new();
        let mut expected_rows = Vec::new();
        for i in 0..doc_count {
            let id = format!("d{i:03}");
            let marker = format!("marker-{case}-{i} ");
            let level: u8 = rng.gen_range(1..=9);
            let loss = loss_steps[rng.gen_range(0..loss_steps.len())];
            let p = probs[rng.gen_range(0..probs.len())];
            let coarse_score = coarse_steps[rng.gen_range(0..coarse_steps.len())];
            docs.push(doc_with(&id, &marker, level));
            losses.insert(marker.clone(), loss);
            explanation_prob.insert(marker.clone(), p);
            coarse.push(CoarseDoc {
                doc_id: id.clone(),
                channel: Channel::Dense,
                coarse_score,
            });
            // Oracle row computed independently from the same tables.
            let f_h = (9 - (level - 1)) as f64;
            let f_u = (3.0_f64 - loss).max(0.0);
            let oracle_fine = f_h * p * (1.0 + f_u);
            expected_rows.push((id, oracle_fine, coarse_score));
        }
        let embeddings = vec![EmbeddingVector::new(vec![1.0]); docs.len()];
        let index = CorpusIndex::from_parts(docs, embeddings).unwrap();
        let backend = Arc::new(TableScores { losses, explanation_prob });
        let gateway = Gateway::from_config(&BackendsConfig::scripted_defaults(1))
            .unwrap()
            .with_backend(Capability::SequenceLoss, backend.clone())
            .with_backend(Capability::CategoryDistribution, backend);
        let prompts = PromptSet::default();
        let cache = RunCache::new();
        let expected: std::collections::BTreeSet<_> =
            [DocumentCategory::Explanation].into_iter().collect();
        let ctx = FineContext { query: "q", ref_answer: "ref", expected: &expected };
        let fine = runtime
            .block_on(fine_rerank(&coarse, &ctx, 1.0, &index, &gateway, &prompts, &cache))
            .unwrap();

        expected_rows.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(b.2.partial_cmp(&a.2).unwrap())
                .then(a.0.cmp(&b.0))
        });
        let engine_ids: Vec<&str> = fine.iter().map(|s| s.doc_id.as_str()).collect();
        let oracle_ids: Vec<&str> = expected_rows.iter().map(|(id, _, _)| id.as_str()).collect();
        assert_eq!(engine_ids, oracle_ids, "case {case}");
        for (scored, (_, oracle_fine, _)) in fine.iter().zip(&expected_rows) {
            assert_eq!(scored.fine_score, *oracle_fine, "case {case} doc {}", scored.doc_id);
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("ACCEPTANCE 2 ordering oracle (100 fixtures <=200 docs, {elapsed:?}): PASS");
}

/// Criterion 3: usefulness clamp and identity, exact.
#[tokio::test]
async fn criterion_03_usefulness_clamp() {
    assert_eq!(usefulness(2.0, 1.5), 0.5);
    assert_eq!(usefulness(2.0, 2.5), 0.0);
    assert_eq!(usefulness(2.0, 2.0), 0.0);

    // Through the scoring path with a scripted loss table.
    let table = MockTable::SequenceLoss {
        rules: vec![ebmrag_core::gateway::LossRule {
            context_contains: vec!["Evidence: helpful".into()],
            target_contains: vec![],
            loss: 1.5,
        }],
        default: 2.0,
    };
    let gateway = Gateway::from_config(&BackendsConfig::scripted_defaults(8))
        .unwrap()
        .with_backend(Capability::SequenceLoss, Arc::new(ScriptedBackend::from_table("l", table)));
    let prompts = PromptSet::default();
    let cache = RunCache::new();
    let helpful = score_usefulness("q", "ref", "helpful", &gateway, &prompts, &cache).await.unwrap();
    assert_eq!(helpful, 0.5);
    let unrelated = score_usefulness("q", "ref", "noise", &gateway, &prompts, &cache).await.unwrap();
    assert_eq!(unrelated, 0.0);
    println!("ACCEPTANCE 3 usefulness clamp and identity (exact): PASS");
}

/// Criterion 4: hierarchy boundaries and guideline pinning.
#[tokio::test]
async fn criterion_04_hierarchy_and_guideline_pinning() {
    assert_eq!(hierarchy_score(1).unwrap(), 9);
    assert_eq!(hierarchy_score(9).unwrap(), 1);

    // Every guideline document is pinned to level 3, hence f_h = 7.
    let gateway = Gateway::from_config(&BackendsConfig::scripted_defaults(8)).unwrap();
    let prompts = PromptSet::default();
    for text in ["dosing guidance", "screening advice", "triage protocol"] {
        let mut doc = doc_with("g", text, 9);
        doc.source_type = SourceType::Guideline;
        let annotated = annotate_evidence_level(doc, &gateway, &prompts).await.unwrap();
        assert_eq!(annotated.evidence_level, 3);
        assert_eq!(hierarchy_score(annotated.evidence_level).unwrap(), 7);
    }
    println!("ACCEPTANCE 4 hierarchy boundaries + guideline pinning (exact): PASS");
}

/// Criterion 5: category-score summation against scripted distributions.
#[tokio::test]
async fn criterion_05_category_summation() {
    let mut dist = BTreeMap::new();
    dist.insert("Definition".to_string(), 0.6);
    dist.insert("Explanation".to_string(), 0.3);
    dist.insert("Narration".to_string(), 0.1);
    let table = MockTable::Distribution { rules: vec![], default: dist };
    let gateway = Gateway::from_config(&BackendsConfig::scripted_defaults(8))
        .unwrap()
        .with_backend(
            Capability::CategoryDistribution,
            Arc::new(ScriptedBackend::from_table("d", table)),
        );
    let prompts = PromptSet::default();
    let cache = RunCache::new();
    let expected: std::collections::BTreeSet<_> =
        [DocumentCategory::Definition, DocumentCategory::Explanation].into_iter().collect();
    let f_g = score_doc_category("doc", "text", &expected, &gateway, &prompts, &cache)
        .await
        .unwrap();
    assert!((f_g - 0.9).abs() < 1e-12, "f_g = {f_g}");

    let all: std::collections::BTreeSet<_> = DocumentCategory::ALL.into_iter().collect();
    let full = score_doc_category("doc", "text", &all, &gateway, &prompts, &cache).await.unwrap();
    assert!((full - 1.0).abs() < 1e-9, "full = {full}");
    println!("ACCEPTANCE 5 category-score summation (0.9 +/- 1e-12, 1.0 +/- 1e-9): PASS");
}

/// Criterion 6: drift arithmetic.
#[test]
fn criterion_06_drift_arithmetic() {
    let docs = vec![doc_with("p", "p text", 5), doc_with("q", "q text", 5)];
    let embeddings =
        vec![EmbeddingVector::new(vec![1.0, 0.0]), EmbeddingVector::new(vec![0.0, 1.0])];
    let index = CorpusIndex::from_parts(docs, embeddings).unwrap();

    let same = drift(&["p".into(), "q".into()], &["p".into(), "q".into()], &index).unwrap();
    assert_eq!(same, 0.0);

    let mu = drift(&["p".into()], &["p".into(), "q".into()], &index).unwrap();
    assert!((mu - 0.5_f64.sqrt()).abs() < 1e-12, "mu = {mu}");
    println!("ACCEPTANCE 6 drift arithmetic (sqrt(0.5) +/- 1e-12, identity exact): PASS");
}

fn completion_rule(contains: &[&str], response: &str) -> CompletionRule {
    CompletionRule {
        contains: contains.iter().map(|s| s.to_string()).collect(),
        response: response.to_string(),
    }
}

/// Criterion 7: loop control — engineered stability stops at t=2 with
/// drift_converged; forced instability runs exactly T=5; CoT enters the
/// reformulation only from t=2 and is present in every later trace.
#[tokio::test]
async fn criterion_07_loop_control() {
    // Stability: constant reformulation, constant retrieval.
    let mut cfg = PipelineConfig::scripted(2);
    cfg.rerank.enable_fine_rerank = false;
    cfg.rerank.enable_conflict_filter = false;
    cfg.retrieval.dense_top_n = 2;
    cfg.retrieval.sparse_top_n = 2;
    cfg.rerank.k_coarse = 2;
    let completion = MockTable::Completion {
        rules: vec![
            completion_rule(&["6 categories of clinical questions"], "Etiology"),
            completion_rule(&["12 categories of question types"], "Explanatory"),
            completion_rule(&["Rewrite the question"], "stable probe QMARK"),
            completion_rule(&["Identify Key Information"], "STABLE-COT"),
        ],
        default: Some("x".into()),
    };
    let embedding = MockTable::Embedding {
        dim: 2,
        rules: vec![
            ebmrag_core::gateway::EmbeddingRule {
                contains: vec!["alpha".into()],
                values: vec![1.0, 0.0],
            },
            ebmrag_core::gateway::EmbeddingRule {
                contains: vec!["beta".into()],
                values: vec![0.0, 1.0],
            },
            ebmrag_core::gateway::EmbeddingRule { contains: vec![], values: vec![1.0, 0.0] },
        ],
        hash_fallback: false,
    };
    let gateway = Gateway::from_config(&cfg.backends)
        .unwrap()
        .with_backend(Capability::Completion, Arc::new(ScriptedBackend::from_table("c", completion)))
        .with_backend(Capability::Embedding, Arc::new(ScriptedBackend::from_table("e", embedding)));
    let index = CorpusIndex::build(
        vec![doc_with("a", "alpha doc", 5), doc_with("b", "beta doc", 5)],
        &gateway,
    )
    .await
    .unwrap();
    let projection = ProjectionMap::default();
    let prompts = PromptSet::default();
    let stable = run_pipeline("why?", &index, &cfg, &projection, &gateway, &prompts, &RunOptions::default())
        .await
        .unwrap();
    assert_eq!(stable.termination_reason, TerminationReason::DriftConverged);
    assert_eq!(stable.traces.len(), 2);
    assert!(stable.traces[0].classified_query.cot_augmentation.is_none());
    assert_eq!(stable.traces[1].classified_query.cot_augmentation.as_deref(), Some("STABLE-COT"));

    // Instability: a fresh document each iteration, delta tiny, T = 5.
    let phases = 5usize;
    let mut unstable_cfg = PipelineConfig::scripted(phases);
    unstable_cfg.rerank.enable_fine_rerank = false;
    unstable_cfg.rerank.enable_conflict_filter = false;
    unstable_cfg.retrieval.dense_top_n = 1;
    unstable_cfg.retrieval.sparse_top_n = 1;
    unstable_cfg.rerank.k_coarse = 1;
    unstable_cfg.loop_.delta = 1e-9;
    unstable_cfg.loop_.max_iterations = 5;
    let mut rules = vec![
        completion_rule(&["6 categories of clinical questions"], "Therapy"),
        completion_rule(&["12 categories of question types"], "Directive"),
    ];
    for phase in (1..phases).rev() {
        rules.push(completion_rule(
            &["Rewrite the question", &format!("next PHASE{phase}")],
            &format!("probe PHASE{phase}"),
        ));
    }
    rules.push(completion_rule(&["Rewrite the question"], "probe PHASE0"));
    for signal in 1..=phases {
        rules.push(completion_rule(
            &["Identify Key Information", &format!("SIG{signal}")],
            &format!("next PHASE{signal}"),
        ));
    }
    let completion = MockTable::Completion { rules, default: Some("x".into()) };
    let mut embedding_rules = Vec::new();
    for phase in 0..phases {
        let mut one_hot = vec![0.0_f32; phases];
        one_hot[phase] = 1.0;
        embedding_rules.push(ebmrag_core::gateway::EmbeddingRule {
            contains: vec![format!("SIG{}", phase + 1)],
            values: one_hot.clone(),
        });
        embedding_rules.push(ebmrag_core::gateway::EmbeddingRule {
            contains: vec![format!("PHASE{phase}")],
            values: one_hot,
        });
    }
    embedding_rules.push(ebmrag_core::gateway::EmbeddingRule {
        contains: vec![],
        values: vec![0.0; phases],
    });
    let embedding =
        MockTable::Embedding { dim: phases, rules: embedding_rules, hash_fallback: false };
    let gateway = Gateway::from_config(&unstable_cfg.backends)
        .unwrap()
        .with_backend(Capability::Completion, Arc::new(ScriptedBackend::from_table("c", completion)))
        .with_backend(Capability::Embedding, Arc::new(ScriptedBackend::from_table("e", embedding)));
    let docs: Vec<EvidenceDocument> =
        (1..=phases).map(|i| doc_with(&format!("s{i}"), &format!("station SIG{i}"), 5)).collect();
    let index = CorpusIndex::build(docs, &gateway).await.unwrap();
    let unstable = run_pipeline(
        "guide me",
        &index,
        &unstable_cfg,
        &projection,
        &gateway,
        &prompts,
        &RunOptions::default(),
    )
    .await
    .unwrap();
    assert_eq!(unstable.termination_reason, TerminationReason::MaxIterations);
    assert_eq!(unstable.traces.len(), 5);
    assert!(unstable.traces[0].classified_query.cot_augmentation.is_none());
    for trace in &unstable.traces[1..] {
        let cot = trace.classified_query.cot_augmentation.as_deref().unwrap();
        assert!(cot.starts_with("next PHASE"), "t={} cot={cot}", trace.t);
    }
    println!("ACCEPTANCE 7 loop control (converge t=2; exhaust T=5; CoT gating): PASS");
}

/// Criterion 8: a ~25k-token chapterless body at threshold 10000 splits into
/// 3 bounded chunks with no text loss.
#[test]
fn criterion_08_segmentation() {
    let ratio = 1.3;
    let body: String = (0..19_230).map(|i| format!("tok{i}")).collect::<Vec<_>>().join(" ");
    let body_estimate = estimate_tokens(&body, ratio);
    assert!((20_000..=30_000).contains(&body_estimate), "estimate {body_estimate}");
    let chunks = segment("fixture", "Long body", &body, &[], 10_000, ratio).unwrap();
    assert_eq!(chunks.len(), 3);
    for chunk in &chunks {
        assert!(chunk.token_estimate <= 10_000);
    }
    let rejoined = chunks.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(" ");
    assert_eq!(rejoined, body, "text loss detected");
    println!("ACCEPTANCE 8 segmentation (3 chunks <= 10000 tokens, no text loss): PASS");
}

/// Criterion 9: conflict filtering removes the strictly lower-evidence
/// member of a conflicting pair and keeps both members of an equal pair.
#[tokio::test]
async fn criterion_09_conflict_filtering() {
    let docs = vec![
        doc_with("high", "HIGHMARK meta analysis", 2),
        doc_with("low", "LOWMARK contrarian claim", 6),
        doc_with("eq_a", "EQAMARK cohort view", 4),
        doc_with("eq_b", "EQBMARK cohort counterview", 4),
    ];
    let embeddings = vec![EmbeddingVector::new(vec![1.0]); 4];
    let index = CorpusIndex::from_parts(docs, embeddings).unwrap();
    let completion = MockTable::Completion {
        rules: vec![
            completion_rule(&["HIGHMARK", "LOWMARK"], "Conflict"),
            completion_rule(&["EQAMARK", "EQBMARK"], "Conflict"),
        ],
        default: Some("Consistent".into()),
    };
    let gateway = Gateway::from_config(&BackendsConfig::scripted_defaults(8))
        .unwrap()
        .with_backend(Capability::Completion, Arc::new(ScriptedBackend::from_table("c", completion)));
    let prompts = PromptSet::default();
    let cache = RunCache::new();
    let coarse: Vec<CoarseDoc> = ["high", "low", "eq_a", "eq_b"]
        .iter()
        .enumerate()
        .map(|(i, id)| CoarseDoc {
            doc_id: id.to_string(),
            channel: Channel::Dense,
            coarse_score: 4.0 - i as f64,
        })
        .collect();
    let report = detect_conflicts(&coarse, &index, &gateway, &prompts, 20, &cache).await.unwrap();
    assert!(report
        .pairs
        .iter()
        .any(|p| p.verdict == Verdict::Conflict && p.doc_a == "high" && p.doc_b == "low"));
    let outcome = filter_conflicts(coarse, &report, &index).unwrap();
    let retained: Vec<&str> = outcome.retained.iter().map(|c| c.doc_id.as_str()).collect();
    assert!(retained.contains(&"high"), "higher-evidence doc must be retained");
    assert!(!retained.contains(&"low"), "lower-evidence doc must be filtered");
    assert!(retained.contains(&"eq_a") && retained.contains(&"eq_b"), "equal levels keep both");
    assert_eq!(outcome.removed.len(), 1);

    // The filtered doc never reaches the fine set.
    let ctx_expected: std::collections::BTreeSet<_> =
        [DocumentCategory::Explanation].into_iter().collect();
    let scorer = Arc::new(TableScores { losses: BTreeMap::new(), explanation_prob: BTreeMap::new() });
    let gateway = gateway
        .with_backend(Capability::SequenceLoss, scorer.clone())
        .with_backend(Capability::CategoryDistribution, scorer);
    let ctx = FineContext { query: "q", ref_answer: "ref", expected: &ctx_expected };
    let fine =
        fine_rerank(&outcome.retained, &ctx, 1.0, &index, &gateway, &prompts, &cache).await.unwrap();
    assert!(fine.iter().all(|s| s.doc_id != "low"));
    println!("ACCEPTANCE 9 conflict filtering (lower-evidence removed, equal retained): PASS");
}

async fn demo_recall(config_name: &str, index: &CorpusIndex, questions: &[(String, String)]) -> Vec<bool> {
    let cfg = PipelineConfig::load(&fixtures_dir().join(config_name)).unwrap();
    let gateway = Gateway::from_config(&cfg.backends).unwrap();
    let prompts = cfg.prompt_set().unwrap();
    let projection = cfg.projection_map().unwrap();
    let mut hits = Vec::new();
    for (qid, question) in questions {
        let result = run_pipeline(
            question,
            index,
            &cfg,
            &projection,
            &gateway,
            &prompts,
            &RunOptions::default(),
        )
        .await
        .unwrap();
        let gold_doc = format!("g{}", &qid[1..]);
        let packed = &result.traces.last().unwrap().packed_set;
        hits.push(packed.contains(&gold_doc));
    }
    hits
}

/// Criterion 10: on the 60-doc synthetic corpus, the full pipeline's
/// packed-set gold recall is >= the vanilla configuration on >= 18 of 20
/// questions, within 60 seconds.
#[tokio::test]
async fn criterion_10_directional_end_to_end() {
    let started = Instant::now();
    let dir = fixtures_dir();
    let cfg = PipelineConfig::load(&dir.join("config.toml")).unwrap();
    let gateway = Gateway::from_config(&cfg.backends).unwrap();
    let prompts = cfg.prompt_set().unwrap();
    let resources = read_corpus_jsonl(&dir.join("corpus.jsonl")).unwrap();
    assert_eq!(resources.len(), 60);
    let docs = ingest(&resources, cfg.corpus.segment_threshold_tokens, cfg.corpus.token_ratio, &gateway, &prompts)
        .await
        .unwrap();
    let index = CorpusIndex::build(docs, &gateway).await.unwrap();

    let questions: Vec<(String, String)> = std::fs::read_to_string(dir.join("questions.jsonl"))
        .unwrap()
        .lines()
        .map(|line| {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            (v["id"].as_str().unwrap().to_string(), v["question"].as_str().unwrap().to_string())
        })
        .collect();
    assert_eq!(questions.len(), 20);

    let full = demo_recall("config.toml", &index, &questions).await;
    let vanilla = demo_recall("config_vanilla.toml", &index, &questions).await;
    let wins = full.iter().zip(&vanilla).filter(|(f, v)| f >= v).count();
    let full_hits = full.iter().filter(|h| **h).count();
    let vanilla_hits = vanilla.iter().filter(|h| **h).count();
    assert!(wins >= 18, "full >= vanilla on only {wins} of 20");
    assert!(
        full_hits > vanilla_hits,
        "expected a strict overall improvement: full {full_hits}, vanilla {vanilla_hits}"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 10 directional end-to-end (full {full_hits}/20 vs vanilla {vanilla_hits}/20, >= on {wins}/20, {elapsed:?}): PASS"
    );
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(ebmrag_bin()).args(args).output().expect("spawn ebmrag")
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let key = path.strip_prefix(dir).unwrap().display().to_string();
                files.insert(key, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

/// Criterion 11: two consecutive `eval` runs of the CLI over the bundled
/// 20-question set produce byte-identical reports, records, and traces.
#[test]
fn criterion_11_eval_determinism() {
    let dir = fixtures_dir();
    let work = tempfile::tempdir().unwrap();
    let index_dir = work.path().join("index");
    let config = dir.join("config.toml").display().to_string();
    let ingest_out = run_cli(&[
        "ingest",
        "--input",
        &dir.join("corpus.jsonl").display().to_string(),
        "--out",
        &index_dir.display().to_string(),
        "--config",
        &config,
    ]);
    assert!(ingest_out.status.success(), "{}", String::from_utf8_lossy(&ingest_out.stderr));

    let mut outputs = Vec::new();
    for run in ["one", "two"] {
        let out_dir = work.path().join(run);
        std::fs::create_dir_all(&out_dir).unwrap();
        let report = out_dir.join("report.json");
        let eval_out = run_cli(&[
            "eval",
            "--index",
            &index_dir.display().to_string(),
            "--config",
            &config,
            "--dataset",
            &dir.join("questions.jsonl").display().to_string(),
            "--report",
            &report.display().to_string(),
            "--workers",
            "4",
        ]);
        assert!(eval_out.status.success(), "{}", String::from_utf8_lossy(&eval_out.stderr));
        outputs.push(read_tree(&out_dir));
    }
    let (one, two) = (&outputs[0], &outputs[1]);
    assert_eq!(one.len(), two.len());
    // Trace paths embedded in records differ by run directory; everything
    // else must match byte for byte (reports and traces exactly).
    for (name, bytes) in one {
        let other = &two[name];
        if name.ends_with("records.jsonl") {
            let normalize = |b: &[u8]| String::from_utf8_lossy(b).replace("/one/", "/run/").replace("/two/", "/run/");
            assert_eq!(normalize(bytes), normalize(other), "{name} differs");
        } else {
            assert_eq!(bytes, other, "{name} differs");
        }
    }
    println!("ACCEPTANCE 11 eval determinism (byte-identical reports and traces): PASS");
}

/// Criterion 12: the service returns the documented shape with per-document
/// scoring fields; malformed bodies get 400; 50 concurrent asks all succeed
/// with identical bodies per question.
#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn criterion_12_service_contract() {
    let dir = fixtures_dir();
    let work = tempfile::tempdir().unwrap();
    let index_dir = work.path().join("index");
    let config = dir.join("config.toml").display().to_string();
    let ingest_out = run_cli(&[
        "ingest",
        "--input",
        &dir.join("corpus.jsonl").display().to_string(),
        "--out",
        &index_dir.display().to_string(),
        "--config",
        &config,
    ]);
    assert!(ingest_out.status.success());

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let mut child = Command::new(ebmrag_bin())
        .args([
            "serve",
            "--index",
            &index_dir.display().to_string(),
            "--config",
            &config,
            "--listen",
            &addr.to_string(),
        ])
        .spawn()
        .unwrap();

    let base = format!("http://{addr}");
    let client = reqwest::Client::new();
    let mut healthy = false;
    for _ in 0..50 {
        tokio::time::sleep(std::time::Duration::from_millis(100)).await;
        if let Ok(response) = client.get(format!("{base}/healthz")).send().await {
            if response.status().is_success() {
                healthy = true;
                break;
            }
        }
    }
    assert!(healthy, "service did not come up");

    let client = client.clone();
    let base_url = base.clone();
    let checks = async move {
        let (client, base) = (client, base_url);
        // Malformed bodies: no JSON, and JSON without `question`.
        let bad = client
            .post(format!("{base}/v1/ask"))
            .header("content-type", "application/json")
            .body("not json")
            .send()
            .await
            .unwrap();
        assert_eq!(bad.status(), 400);
        let missing = client
            .post(format!("{base}/v1/ask"))
            .json(&serde_json::json!({ "not_question": 1 }))
            .send()
            .await
            .unwrap();
        assert_eq!(missing.status(), 400);

        // Shape check on one response.
        let question = "What causes veltrosis in patients with flushpain?";
        let shaped: serde_json::Value = client
            .post(format!("{base}/v1/ask"))
            .json(&serde_json::json!({ "question": question }))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert!(shaped["answer"].is_string());
        assert!(shaped["termination_reason"].is_string());
        assert!(shaped["iterations"].is_u64());
        let evidence = shaped["evidence"].as_array().unwrap();
        assert!(!evidence.is_empty());
        for entry in evidence {
            for field in ["doc_id", "fine_score", "f_h", "f_u", "f_g"] {
                assert!(!entry[field].is_null(), "missing {field}");
            }
        }

        // 50 concurrent asks across 5 distinct questions.
        let questions = [
            "What causes veltrosis in patients with flushpain?",
            "What causes kardenia in patients with tremorlag?",
            "What is the recommended therapy for gastrenia presenting with acidgnaw?",
            "What is the long-term prognosis of retinovex after glarehalo?",
            "What is the recommended therapy for bronchassa presenting with raspcough?",
        ];
        let mut tasks = Vec::new();
        for i in 0..50 {
            let client = client.clone();
            let base = base.clone();
            let question = questions[i % questions.len()].to_string();
            tasks.push(tokio::spawn(async move {
                let response = client
                    .post(format!("{base}/v1/ask"))
                    .json(&serde_json::json!({ "question": question }))
                    .send()
                    .await
                    .unwrap();
                assert_eq!(response.status(), 200);
                (question, response.text().await.unwrap())
            }));
        }
        let mut bodies: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for task in tasks {
            let (question, body) = task.await.unwrap();
            bodies.entry(question).or_default().push(body);
        }
        for (question, responses) in &bodies {
            assert!(
                responses.windows(2).all(|w| w[0] == w[1]),
                "responses for `{question}` differ"
            );
        }
    };

    let result = tokio::spawn(checks).await;
    child.kill().ok();
    child.wait().ok();
    result.expect("service checks panicked");
    println!("ACCEPTANCE 12 service contract (shape, 400s, 50 concurrent identical): PASS");
}
