//! The unified MCQ dataset schema: one JSON object per line with
//! `{id, question, options?: [{label, text}], gold?}`.

use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionOption {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetQuestion {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub options: Vec<QuestionOption>,
    #[serde(default)]
    pub gold: Option<String>,
}

impl DatasetQuestion {
    pub fn option_pairs(&self) -> Vec<(String, String)> {
        self.options.iter().map(|o| (o.label.clone(), o.text.clone())).collect()
    }
}

pub fn read_dataset(path: &Path) -> anyhow::Result<Vec<DatasetQuestion>> {
    let file = std::fs::File::open(path).with_context(|| format!("open {}", path.display()))?;
    let reader = BufReader::new(file);
    let mut questions = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let question: DatasetQuestion = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: malformed dataset line", path.display(), i + 1))?;
        if question.question.trim().is_empty() {
            bail!("{}:{}: empty question text", path.display(), i + 1);
        }
        if let Some(gold) = &question.gold {
            if !question.options.iter().any(|o| &o.label == gold) {
                bail!(
                    "{}:{}: gold label `{gold}` is not among the option labels",
                    path.display(),
                    i + 1
                );
            }
        }
        if !seen.insert(question.id.clone()) {
            bail!("{}:{}: duplicate question id `{}`", path.display(), i + 1, question.id);
        }
        questions.push(question);
    }
    Ok(questions)
}
