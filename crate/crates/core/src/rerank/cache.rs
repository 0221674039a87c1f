//! Per-run memoization for backend-derived values.
//!
//! Keys are doc ids or query text; one cache lives for one pipeline run, so
//! repeated scoring of the same document across iterations costs one backend
//! call. Concurrent insertion of identical values is harmless — scripted and
//! temperature-0 backends return the same value for the same key.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::gateway::CategoryDistribution;
use crate::rerank::conflict::Verdict;

#[derive(Default)]
pub struct RunCache {
    ref_answers: Mutex<HashMap<String, String>>,
    init_losses: Mutex<HashMap<String, f64>>,
    distributions: Mutex<HashMap<String, CategoryDistribution>>,
    verdicts: Mutex<HashMap<(String, String), (Verdict, String)>>,
}

impl RunCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ref_answer(&self, query: &str) -> Option<String> {
        self.ref_answers.lock().unwrap().get(query).cloned()
    }

    pub fn store_ref_answer(&self, query: &str, answer: &str) {
        self.ref_answers.lock().unwrap().insert(query.to_string(), answer.to_string());
    }

    pub fn init_loss(&self, query: &str) -> Option<f64> {
        self.init_losses.lock().unwrap().get(query).copied()
    }

    pub fn store_init_loss(&self, query: &str, loss: f64) {
        self.init_losses.lock().unwrap().insert(query.to_string(), loss);
    }

    pub fn distribution(&self, doc_id: &str) -> Option<CategoryDistribution> {
        self.distributions.lock().unwrap().get(doc_id).cloned()
    }

    pub fn store_distribution(&self, doc_id: &str, dist: &CategoryDistribution) {
        self.distributions.lock().unwrap().insert(doc_id.to_string(), dist.clone());
    }

    pub fn verdict(&self, a: &str, b: &str) -> Option<(Verdict, String)> {
        self.verdicts.lock().unwrap().get(&(a.to_string(), b.to_string())).cloned()
    }

    pub fn store_verdict(&self, a: &str, b: &str, verdict: Verdict, rationale: &str) {
        self.verdicts
            .lock()
            .unwrap()
            .insert((a.to_string(), b.to_string()), (verdict, rationale.to_string()));
    }
}
