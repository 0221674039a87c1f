//! Prompt templates for every model-facing operation.
//!
//! Defaults are compiled into the binary; a `prompt_dir` in the config can
//! override any template by file name (same names as under `prompts/`).
//! Placeholders use `{name}` and are substituted literally — unknown braces
//! in a template (such as the JSON example in the document-category prompt)
//! are left untouched.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::Result;
use crate::formulate::EBMCategory;

const EBM_CLASSIFY: &str = include_str!("../prompts/ebm_classify.txt");
const GENERAL_CLASSIFY: &str = include_str!("../prompts/general_classify.txt");
const DOC_CATEGORY: &str = include_str!("../prompts/doc_category.txt");
const EVIDENCE_LEVEL: &str = include_str!("../prompts/evidence_level.txt");
const COT: &str = include_str!("../prompts/cot.txt");
const CONFLICT: &str = include_str!("../prompts/conflict.txt");
const REFERENCE_ANSWER: &str = include_str!("../prompts/reference_answer.txt");
const ANSWER_CONTEXT: &str = include_str!("../prompts/answer_context.txt");
const FINAL_ANSWER: &str = include_str!("../prompts/final_answer.txt");
const REFORMULATE_DIAGNOSIS: &str = include_str!("../prompts/reformulate_diagnosis.txt");
const REFORMULATE_THERAPY: &str = include_str!("../prompts/reformulate_therapy.txt");
const REFORMULATE_PROGNOSIS: &str = include_str!("../prompts/reformulate_prognosis.txt");
const REFORMULATE_ETIOLOGY: &str = include_str!("../prompts/reformulate_etiology.txt");
const REFORMULATE_PREVENTION: &str = include_str!("../prompts/reformulate_prevention.txt");
const REFORMULATE_COST: &str = include_str!("../prompts/reformulate_cost.txt");

/// The full set of templates used by the pipeline.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub ebm_classify: String,
    pub general_classify: String,
    pub doc_category: String,
    pub evidence_level: String,
    pub cot: String,
    pub conflict: String,
    pub reference_answer: String,
    pub answer_context: String,
    pub final_answer: String,
    reformulate: BTreeMap<EBMCategory, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        let mut reformulate = BTreeMap::new();
        reformulate.insert(EBMCategory::Diagnosis, REFORMULATE_DIAGNOSIS.to_string());
        reformulate.insert(EBMCategory::Therapy, REFORMULATE_THERAPY.to_string());
        reformulate.insert(EBMCategory::Prognosis, REFORMULATE_PROGNOSIS.to_string());
        reformulate.insert(EBMCategory::Etiology, REFORMULATE_ETIOLOGY.to_string());
        reformulate.insert(EBMCategory::Prevention, REFORMULATE_PREVENTION.to_string());
        reformulate.insert(EBMCategory::Cost, REFORMULATE_COST.to_string());
        Self {
            ebm_classify: EBM_CLASSIFY.to_string(),
            general_classify: GENERAL_CLASSIFY.to_string(),
            doc_category: DOC_CATEGORY.to_string(),
            evidence_level: EVIDENCE_LEVEL.to_string(),
            cot: COT.to_string(),
            conflict: CONFLICT.to_string(),
            reference_answer: REFERENCE_ANSWER.to_string(),
            answer_context: ANSWER_CONTEXT.to_string(),
            final_answer: FINAL_ANSWER.to_string(),
            reformulate,
        }
    }
}

impl PromptSet {
    /// Defaults with per-file overrides from `dir`, when the file exists.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut set = Self::default();
        let load = |name: &str, slot: &mut String| -> Result<()> {
            let path = dir.join(name);
            if path.is_file() {
                *slot = std::fs::read_to_string(&path)?;
            }
            Ok(())
        };
        load("ebm_classify.txt", &mut set.ebm_classify)?;
        load("general_classify.txt", &mut set.general_classify)?;
        load("doc_category.txt", &mut set.doc_category)?;
        load("evidence_level.txt", &mut set.evidence_level)?;
        load("cot.txt", &mut set.cot)?;
        load("conflict.txt", &mut set.conflict)?;
        load("reference_answer.txt", &mut set.reference_answer)?;
        load("answer_context.txt", &mut set.answer_context)?;
        load("final_answer.txt", &mut set.final_answer)?;
        for category in EBMCategory::ALL {
            let name = format!("reformulate_{}.txt", category.as_snake());
            let path = dir.join(&name);
            if path.is_file() {
                set.reformulate
                    .insert(category, std::fs::read_to_string(&path)?);
            }
        }
        Ok(set)
    }

    /// Reformulation template for one EBM category.
    pub fn reformulate_template(&self, category: EBMCategory) -> &str {
        // Every category is seeded in `default()`, so the lookup is total.
        self.reformulate
            .get(&category)
            .map(String::as_str)
            .expect("reformulation template for every category")
    }
}

/// Substitute `{name}` placeholders; pairs not present in `vars` are kept verbatim.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_only_known_placeholders() {
        let s = render("a {x} b {y} {z}", &[("x", "1"), ("y", "2")]);
        assert_eq!(s, "a 1 b 2 {z}");
    }

    #[test]
    fn default_set_has_all_reformulation_categories() {
        let set = PromptSet::default();
        for category in EBMCategory::ALL {
            assert!(!set.reformulate_template(category).is_empty());
        }
    }

    #[test]
    fn doc_category_template_keeps_json_example_braces() {
        let set = PromptSet::default();
        let rendered = render(&set.doc_category, &[("document", "text here")]);
        assert!(rendered.contains("text here"));
        assert!(rendered.contains("\"Argumentation\""));
    }

    #[test]
    fn prompt_dir_overrides_only_the_files_present() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cot.txt"), "custom cot {question}").unwrap();
        std::fs::write(dir.path().join("reformulate_cost.txt"), "cheap {question}{prior_reasoning}").unwrap();
        let set = PromptSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.cot, "custom cot {question}");
        assert_eq!(set.reformulate_template(EBMCategory::Cost), "cheap {question}{prior_reasoning}");
        // Untouched templates keep the defaults.
        assert_eq!(set.ebm_classify, PromptSet::default().ebm_classify);
        assert_eq!(
            set.reformulate_template(EBMCategory::Therapy),
            PromptSet::default().reformulate_template(EBMCategory::Therapy)
        );
    }
}
