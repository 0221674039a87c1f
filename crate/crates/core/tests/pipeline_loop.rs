//! Loop-control behaviour with engineered scripted backends: convergence at
//! the first stable iteration, exhaustion under forced instability, CoT
//! gating, packing prefix, and full determinism.

use std::sync::Arc;

use ebmrag_core::config::PipelineConfig;
use ebmrag_core::corpus::{CorpusIndex, EvidenceDocument, SourceType};
use ebmrag_core::gateway::{
    Capability, CompletionRule, EmbeddingRule, Gateway, MockTable, ScriptedBackend,
};
use ebmrag_core::pipeline::{run_pipeline, RunOptions, TerminationReason};
use ebmrag_core::prompts::PromptSet;
use ebmrag_core::rerank::ProjectionMap;

fn doc(id: &str, text: &str) -> EvidenceDocument {
    EvidenceDocument {
        doc_id: id.to_string(),
        source_type: SourceType::Entry,
        title: id.to_string(),
        text: text.to_string(),
        token_estimate: 10,
        evidence_level: 5,
        metadata: Default::default(),
    }
}

fn completion_rule(contains: &[&str], response: &str) -> CompletionRule {
    CompletionRule {
        contains: contains.iter().map(|s| s.to_string()).collect(),
        response: response.to_string(),
    }
}

fn embedding_rule(contains: &[&str], values: &[f32]) -> EmbeddingRule {
    EmbeddingRule {
        contains: contains.iter().map(|s| s.to_string()).collect(),
        values: values.to_vec(),
    }
}

/// Gateway + index where retrieval is identical every iteration: the
/// reformulation is constant, so iteration 2 reproduces iteration 1's
/// coarse set and drift is exactly zero.
async fn stable_fixture(dim_cfg: &mut PipelineConfig) -> (Gateway, CorpusIndex) {
    dim_cfg.backends.embedding_dim = Some(2);
    dim_cfg.rerank.enable_fine_rerank = false;
    dim_cfg.rerank.enable_conflict_filter = false;
    dim_cfg.retrieval.dense_top_n = 2;
    dim_cfg.retrieval.sparse_top_n = 2;
    dim_cfg.rerank.k_coarse = 2;

    let completion = MockTable::Completion {
        rules: vec![
            completion_rule(&["6 categories of clinical questions"], "Etiology"),
            completion_rule(&["12 categories of question types"], "Explanatory"),
            completion_rule(&["Rewrite the question"], "stable reformulated QMARK"),
            completion_rule(&["Identify Key Information"], "COT-STABLE reasoning"),
        ],
        default: Some("unused".to_string()),
    };
    let embedding = MockTable::Embedding {
        dim: 2,
        rules: vec![
            embedding_rule(&["doc one"], &[1.0, 0.0]),
            embedding_rule(&["doc two"], &[0.9, 0.1]),
            embedding_rule(&["doc three"], &[0.0, 1.0]),
            embedding_rule(&["QMARK"], &[1.0, 0.0]),
            embedding_rule(&[], &[0.5, 0.5]),
        ],
        hash_fallback: false,
    };
    let gateway = Gateway::from_config(&dim_cfg.backends)
        .unwrap()
        .with_backend(Capability::Completion, Arc::new(ScriptedBackend::from_table("c", completion)))
        .with_backend(Capability::Embedding, Arc::new(ScriptedBackend::from_table("e", embedding)));
    let docs =
        vec![doc("d1", "alpha doc one"), doc("d2", "beta doc two"), doc("d3", "gamma doc three")];
    let index = CorpusIndex::build(docs, &gateway).await.unwrap();
    (gateway, index)
}

#[tokio::test]
async fn stable_retrieval_converges_at_iteration_two() {
    let mut cfg = PipelineConfig::scripted(2);
    let (gateway, index) = stable_fixture(&mut cfg).await;
    let projection = ProjectionMap::default();
    let prompts = PromptSet::default();
    let result = run_pipeline(
        "why does it happen?",
        &index,
        &cfg,
        &projection,
        &gateway,
        &prompts,
        &RunOptions::default(),
    )
    .await
    .unwrap();

    assert_eq!(result.termination_reason, TerminationReason::DriftConverged);
    assert_eq!(result.traces.len(), 2);
    assert_eq!(result.traces[1].drift, Some(0.0));
    assert!(result.traces[1].terminated_here);
    // Last trace's packed set is the final packed set.
    let packed_ids: Vec<&str> = result.final_packed.iter().map(|s| s.doc_id.as_str()).collect();
    assert_eq!(result.traces[1].packed_set, packed_ids);
}

#[tokio::test]
async fn cot_enters_reformulation_only_from_iteration_two() {
    let mut cfg = PipelineConfig::scripted(2);
    let (gateway, index) = stable_fixture(&mut cfg).await;
    let result = run_pipeline(
        "why does it happen?",
        &index,
        &cfg,
        &ProjectionMap::default(),
        &gateway,
        &PromptSet::default(),
        &RunOptions::default(),
    )
    .await
    .unwrap();
    assert!(result.traces[0].classified_query.cot_augmentation.is_none());
    assert!(!result.traces[0].cot.is_empty());
    for trace in &result.traces[1..] {
        assert_eq!(trace.classified_query.cot_augmentation.as_deref(), Some("COT-STABLE reasoning"));
    }
}

#[tokio::test]
async fn single_iteration_budget_short_circuits() {
    let mut cfg = PipelineConfig::scripted(2);
    let (gateway, index) = stable_fixture(&mut cfg).await;
    cfg.loop_.max_iterations = 1;
    let result = run_pipeline(
        "why does it happen?",
        &index,
        &cfg,
        &ProjectionMap::default(),
        &gateway,
        &PromptSet::default(),
        &RunOptions::default(),
    )
    .await
    .unwrap();
    assert_eq!(result.termination_reason, TerminationReason::MaxIterations);
    assert_eq!(result.traces.len(), 1);
    assert_eq!(result.traces[0].drift, None);
}

/// Every iteration retrieves a different document: the CoT carries a phase
/// marker that steers the next embedding to a new one-hot direction.
async fn unstable_fixture(cfg: &mut PipelineConfig) -> (Gateway, CorpusIndex) {
    let phases = 5usize;
    cfg.backends.embedding_dim = Some(phases);
    cfg.rerank.enable_fine_rerank = false;
    cfg.rerank.enable_conflict_filter = false;
    cfg.retrieval.dense_top_n = 1;
    cfg.retrieval.sparse_top_n = 1;
    cfg.rerank.k_coarse = 1;
    cfg.loop_.delta = 1e-9;
    cfg.loop_.max_iterations = 5;

    let mut completion_rules = vec![
        completion_rule(&["6 categories of clinical questions"], "Therapy"),
        completion_rule(&["12 categories of question types"], "Directive"),
    ];
    // Most specific first: reformulation keyed by the prior CoT's phase marker.
    for phase in (1..phases).rev() {
        completion_rules.push(completion_rule(
            &["Rewrite the question", &format!("next PHASE{phase}")],
            &format!("probe PHASE{phase}"),
        ));
    }
    completion_rules.push(completion_rule(&["Rewrite the question"], "probe PHASE0"));
    for signal in 1..=phases {
        completion_rules.push(completion_rule(
            &["Identify Key Information", &format!("SIG{signal}")],
            &format!("next PHASE{signal}"),
        ));
    }
    let completion = MockTable::Completion { rules: completion_rules, default: Some("none".into()) };

    let mut embedding_rules = Vec::new();
    for phase in 0..phases {
        let mut one_hot = vec![0.0_f32; phases];
        one_hot[phase] = 1.0;
        embedding_rules.push(embedding_rule(&[&format!("SIG{}", phase + 1)], &one_hot));
        embedding_rules.push(embedding_rule(&[&format!("PHASE{phase}")], &one_hot));
    }
    embedding_rules.push(embedding_rule(&[], &vec![0.0; phases]));
    let embedding = MockTable::Embedding { dim: phases, rules: embedding_rules, hash_fallback: false };

    let gateway = Gateway::from_config(&cfg.backends)
        .unwrap()
        .with_backend(Capability::Completion, Arc::new(ScriptedBackend::from_table("c", completion)))
        .with_backend(Capability::Embedding, Arc::new(ScriptedBackend::from_table("e", embedding)));
    let docs: Vec<EvidenceDocument> =
        (1..=phases).map(|i| doc(&format!("d{i}"), &format!("station {i} SIG{i}"))).collect();
    let index = CorpusIndex::build(docs, &gateway).await.unwrap();
    (gateway, index)
}

#[tokio::test]
async fn forced_instability_runs_all_iterations() {
    let mut cfg = PipelineConfig::scripted(5);
    let (gateway, index) = unstable_fixture(&mut cfg).await;
    let result = run_pipeline(
        "guide me",
        &index,
        &cfg,
        &ProjectionMap::default(),
        &gateway,
        &PromptSet::default(),
        &RunOptions::default(),
    )
    .await
    .unwrap();
    assert_eq!(result.termination_reason, TerminationReason::MaxIterations);
    assert_eq!(result.traces.len(), 5);
    // A fresh document every iteration.
    let firsts: Vec<&str> =
        result.traces.iter().map(|t| t.coarse_set[0].doc_id.as_str()).collect();
    assert_eq!(firsts, vec!["d1", "d2", "d3", "d4", "d5"]);
    // Drift stays above threshold: sqrt(2) between consecutive one-hots.
    for trace in &result.traces[1..] {
        let mu = trace.drift.unwrap();
        assert!((mu - 2.0_f64.sqrt()).abs() < 1e-12);
        assert!(!trace.terminated_here);
    }
}

#[tokio::test]
async fn first_stop_correctness_and_prefix_packing() {
    let mut cfg = PipelineConfig::scripted(2);
    let (gateway, index) = stable_fixture(&mut cfg).await;
    let result = run_pipeline(
        "why does it happen?",
        &index,
        &cfg,
        &ProjectionMap::default(),
        &gateway,
        &PromptSet::default(),
        &RunOptions::default(),
    )
    .await
    .unwrap();
    // Termination at the smallest t >= 2 with μ < δ: no trace after it.
    let stop = result.traces.iter().position(|t| t.terminated_here).unwrap();
    assert_eq!(stop, result.traces.len() - 1);
    // packed_set is exactly a prefix of fine_set's ordering.
    for trace in &result.traces {
        let fine_ids: Vec<&str> = trace.fine_set.iter().map(|s| s.doc_id.as_str()).collect();
        assert_eq!(&fine_ids[..trace.packed_set.len()], trace.packed_set.as_slice());
    }
}

#[tokio::test]
async fn pipeline_is_bit_deterministic_across_runs_and_schedules() {
    let mut cfg = PipelineConfig::scripted(5);
    let (gateway, index) = unstable_fixture(&mut cfg).await;
    let projection = ProjectionMap::default();
    let prompts = PromptSet::default();
    let opts = RunOptions::default();
    let run = || run_pipeline("guide me", &index, &cfg, &projection, &gateway, &prompts, &opts);
    let first = run().await.unwrap();
    let second = run().await.unwrap();
    assert_eq!(
        serde_json::to_string(&first).unwrap(),
        serde_json::to_string(&second).unwrap()
    );
}

#[tokio::test]
async fn ignore_delta_disables_termination() {
    let mut cfg = PipelineConfig::scripted(2);
    let (gateway, index) = stable_fixture(&mut cfg).await;
    cfg.loop_.max_iterations = 4;
    let result = run_pipeline(
        "why does it happen?",
        &index,
        &cfg,
        &ProjectionMap::default(),
        &gateway,
        &PromptSet::default(),
        &RunOptions { ignore_delta: true },
    )
    .await
    .unwrap();
    assert_eq!(result.termination_reason, TerminationReason::MaxIterations);
    assert_eq!(result.traces.len(), 4);
    // Drift is still recorded for calibration.
    assert_eq!(result.traces[1].drift, Some(0.0));
}

#[tokio::test]
async fn empty_index_records_no_evidence_iterations() {
    let mut cfg = PipelineConfig::scripted(2);
    let (gateway, _) = stable_fixture(&mut cfg).await;
    cfg.loop_.max_iterations = 3;
    let empty = CorpusIndex::from_parts(vec![], vec![]).unwrap();
    let result = run_pipeline(
        "why does it happen?",
        &empty,
        &cfg,
        &ProjectionMap::default(),
        &gateway,
        &PromptSet::default(),
        &RunOptions::default(),
    )
    .await
    .unwrap();
    // Drift against an empty set is undefined (+inf), so the loop never
    // converges and every iteration records an empty evidence set.
    assert_eq!(result.termination_reason, TerminationReason::MaxIterations);
    assert_eq!(result.traces.len(), 3);
    for trace in &result.traces {
        assert_eq!(trace.candidate_count, 0);
        assert!(trace.coarse_set.is_empty());
        assert!(trace.packed_set.is_empty());
    }
    assert!(result.traces[1].drift.unwrap().is_infinite());
    assert!(result.final_packed.is_empty());
}

#[tokio::test]
async fn stage_errors_name_stage_and_iteration() {
    let mut cfg = PipelineConfig::scripted(2);
    let (gateway, index) = stable_fixture(&mut cfg).await;
    // Break the embedding backend only: classification succeeds, retrieval fails.
    let wrong_dim = MockTable::Embedding {
        dim: 3,
        rules: vec![embedding_rule(&[], &[1.0, 0.0, 0.0])],
        hash_fallback: false,
    };
    let gateway = gateway.with_backend(
        Capability::Embedding,
        Arc::new(ScriptedBackend::from_table("e", wrong_dim)),
    );
    let err = run_pipeline(
        "why does it happen?",
        &index,
        &cfg,
        &ProjectionMap::default(),
        &gateway,
        &PromptSet::default(),
        &RunOptions::default(),
    )
    .await
    .unwrap_err();
    assert_eq!(err.iteration, 1);
    assert_eq!(err.stage.to_string(), "retrieval");
    let message = err.to_string();
    assert!(message.contains("retrieval"), "message: {message}");
    assert!(message.contains("iteration 1"), "message: {message}");
}
