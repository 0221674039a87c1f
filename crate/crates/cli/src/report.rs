//! Per-question evaluation records and the aggregated run report.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// One evaluated question. `correct` is defined exactly when a gold label is
/// present; `predicted_label` is an option label or `"unparsed"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub question: String,
    pub options: Vec<crate::dataset::QuestionOption>,
    pub gold_label: Option<String>,
    pub predicted_label: String,
    pub correct: Option<bool>,
    pub trace_path: String,
    pub ebm_category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Aggregated accuracy report. The wall time is measured per run and
/// reported on stderr; it is not serialized, so report files are
/// byte-stable across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub dataset_name: String,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub unparsed_rate: f64,
    pub per_category: BTreeMap<String, f64>,
    #[serde(skip)]
    pub wall_time_ms: u64,
}

impl RunReport {
    /// Recount every aggregate directly from the records.
    pub fn from_records(dataset_name: &str, records: &[EvalRecord], wall_time_ms: u64) -> Self {
        let n = records.len();
        let with_gold: Vec<&EvalRecord> = records.iter().filter(|r| r.gold_label.is_some()).collect();
        let accuracy = if !with_gold.is_empty() && with_gold.len() == n {
            let correct = with_gold.iter().filter(|r| r.correct == Some(true)).count();
            Some(correct as f64 / n as f64)
        } else {
            None
        };
        let unparsed = records.iter().filter(|r| r.predicted_label == "unparsed").count();
        let unparsed_rate = if n == 0 { 0.0 } else { unparsed as f64 / n as f64 };

        let mut per_category: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for record in &with_gold {
            let entry = per_category.entry(record.ebm_category.clone()).or_insert((0, 0));
            entry.1 += 1;
            if record.correct == Some(true) {
                entry.0 += 1;
            }
        }
        let per_category = per_category
            .into_iter()
            .map(|(category, (correct, total))| (category, correct as f64 / total as f64))
            .collect();

        RunReport {
            format_version: REPORT_FORMAT_VERSION,
            dataset_name: dataset_name.to_string(),
            n,
            accuracy,
            unparsed_rate,
            per_category,
            wall_time_ms,
        }
    }
}

/// Load previously written records (for resume); missing file → empty.
pub fn read_records(path: &Path) -> anyhow::Result<Vec<EvalRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
