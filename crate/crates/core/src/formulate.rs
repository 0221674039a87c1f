//! Query classification along both taxonomies, and EBM-aligned reformulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{normalize_label, Decoding, Gateway};
use crate::prompts::{render, PromptSet};

/// The six clinical question intents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EBMCategory {
    Diagnosis,
    Therapy,
    Prognosis,
    Etiology,
    Prevention,
    Cost,
}

impl EBMCategory {
    pub const ALL: [EBMCategory; 6] = [
        EBMCategory::Diagnosis,
        EBMCategory::Therapy,
        EBMCategory::Prognosis,
        EBMCategory::Etiology,
        EBMCategory::Prevention,
        EBMCategory::Cost,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EBMCategory::Diagnosis => "Diagnosis",
            EBMCategory::Therapy => "Therapy",
            EBMCategory::Prognosis => "Prognosis",
            EBMCategory::Etiology => "Etiology",
            EBMCategory::Prevention => "Prevention",
            EBMCategory::Cost => "Cost",
        }
    }

    pub fn as_snake(self) -> &'static str {
        match self {
            EBMCategory::Diagnosis => "diagnosis",
            EBMCategory::Therapy => "therapy",
            EBMCategory::Prognosis => "prognosis",
            EBMCategory::Etiology => "etiology",
            EBMCategory::Prevention => "prevention",
            EBMCategory::Cost => "cost",
        }
    }

    /// Case- and punctuation-insensitive parse; `None` for anything outside the enum.
    pub fn parse_label(label: &str) -> Option<Self> {
        let wanted = normalize_label(label);
        Self::ALL.into_iter().find(|c| normalize_label(c.as_str()) == wanted)
    }
}

impl std::fmt::Display for EBMCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The twelve general natural-language question intents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneralQuestionType {
    Factual,
    Referential,
    Definition,
    Explanatory,
    Descriptive,
    Directive,
    Opinion,
    Procedural,
    Comparative,
    Evaluative,
    Verification,
    Hypothetical,
}

impl GeneralQuestionType {
    pub const ALL: [GeneralQuestionType; 12] = [
        GeneralQuestionType::Factual,
        GeneralQuestionType::Referential,
        GeneralQuestionType::Definition,
        GeneralQuestionType::Explanatory,
        GeneralQuestionType::Descriptive,
        GeneralQuestionType::Directive,
        GeneralQuestionType::Opinion,
        GeneralQuestionType::Procedural,
        GeneralQuestionType::Comparative,
        GeneralQuestionType::Evaluative,
        GeneralQuestionType::Verification,
        GeneralQuestionType::Hypothetical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GeneralQuestionType::Factual => "Factual",
            GeneralQuestionType::Referential => "Referential",
            GeneralQuestionType::Definition => "Definition",
            GeneralQuestionType::Explanatory => "Explanatory",
            GeneralQuestionType::Descriptive => "Descriptive",
            GeneralQuestionType::Directive => "Directive",
            GeneralQuestionType::Opinion => "Opinion",
            GeneralQuestionType::Procedural => "Procedural",
            GeneralQuestionType::Comparative => "Comparative",
            GeneralQuestionType::Evaluative => "Evaluative",
            GeneralQuestionType::Verification => "Verification",
            GeneralQuestionType::Hypothetical => "Hypothetical",
        }
    }

    /// Accepts both "Definition" and the classifier prompt's "Definitional".
    pub fn parse_label(label: &str) -> Option<Self> {
        let wanted = normalize_label(label);
        if wanted == "definitional" {
            return Some(GeneralQuestionType::Definition);
        }
        Self::ALL.into_iter().find(|t| normalize_label(t.as_str()) == wanted)
    }
}

impl std::fmt::Display for GeneralQuestionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A query after classification and reformulation.
///
/// `cot_augmentation` must be `None` at iteration 1: chain-of-thought context
/// only joins the reformulation from the second iteration onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedQuery {
    pub original: String,
    pub ebm_category: EBMCategory,
    pub question_type: GeneralQuestionType,
    pub reformulated: String,
    pub cot_augmentation: Option<String>,
    pub iteration: u32,
}

impl ClassifiedQuery {
    pub fn new(
        original: impl Into<String>,
        ebm_category: EBMCategory,
        question_type: GeneralQuestionType,
        reformulated: impl Into<String>,
        cot_augmentation: Option<String>,
        iteration: u32,
    ) -> Result<Self> {
        let reformulated = reformulated.into();
        if reformulated.is_empty() {
            return Err(Error::InvalidArgument("ClassifiedQuery: empty reformulation".to_string()));
        }
        if iteration == 0 {
            return Err(Error::InvalidArgument("ClassifiedQuery: iteration starts at 1".to_string()));
        }
        if iteration == 1 && cot_augmentation.is_some() {
            return Err(Error::InvalidArgument(
                "ClassifiedQuery: no CoT augmentation at iteration 1".to_string(),
            ));
        }
        Ok(ClassifiedQuery {
            original: original.into(),
            ebm_category,
            question_type,
            reformulated,
            cot_augmentation,
            iteration,
        })
    }

    /// The text both retrieval channels consume: reformulation, plus the CoT
    /// augmentation when present.
    pub fn retrieval_text(&self) -> String {
        match &self.cot_augmentation {
            Some(cot) if !cot.is_empty() => format!("{}\n{}", self.reformulated, cot),
            _ => self.reformulated.clone(),
        }
    }
}

async fn classify_with_reprompt<T>(
    gateway: &Gateway,
    prompt: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<T> {
    let first = gateway.complete(prompt, &Decoding::label()).await?;
    if let Some(value) = parse(&first) {
        return Ok(value);
    }
    let reprompt =
        format!("{prompt}\n\nRespond with exactly one category name from the list above, and nothing else.");
    let second = gateway.complete(&reprompt, &Decoding::label()).await?;
    parse(&second).ok_or(Error::UnparseableLabel { raw: second })
}

/// Classify a query into one of the six EBM categories.
pub async fn classify_ebm(query: &str, gateway: &Gateway, prompts: &PromptSet) -> Result<EBMCategory> {
    if query.is_empty() {
        return Err(Error::InvalidArgument("classify_ebm: empty query".to_string()));
    }
    let prompt = render(&prompts.ebm_classify, &[("question", query)]);
    classify_with_reprompt(gateway, &prompt, |s| EBMCategory::parse_label(s.trim())).await
}

/// Classify a query into one of the twelve general question types.
pub async fn classify_general(
    query: &str,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<GeneralQuestionType> {
    if query.is_empty() {
        return Err(Error::InvalidArgument("classify_general: empty query".to_string()));
    }
    let prompt = render(&prompts.general_classify, &[("question", query)]);
    classify_with_reprompt(gateway, &prompt, |s| GeneralQuestionType::parse_label(s.trim())).await
}

/// Result of a reformulation; `fell_back` is set when the backend returned
/// an empty completion and the original query was kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Reformulated {
    pub text: String,
    pub fell_back: bool,
}

/// Rewrite a query with the category's instruction template, folding prior
/// reasoning into a sentinel-delimited block from iteration 2 onward.
pub async fn reformulate(
    query: &str,
    category: EBMCategory,
    cot: Option<&str>,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<Reformulated> {
    if query.is_empty() {
        return Err(Error::InvalidArgument("reformulate: empty query".to_string()));
    }
    let prior = match cot {
        Some(cot) if !cot.is_empty() => format!(
            "\n# Prior Reasoning\n<<<BEGIN PRIOR REASONING>>>\n{cot}\n<<<END PRIOR REASONING>>>\n"
        ),
        _ => String::new(),
    };
    let prompt = render(
        prompts.reformulate_template(category),
        &[("question", query), ("prior_reasoning", prior.as_str())],
    );
    let completion = gateway.complete(&prompt, &Decoding::text()).await?;
    let trimmed = completion.trim();
    if trimmed.is_empty() {
        Ok(Reformulated { text: query.to_string(), fell_back: true })
    } else {
        Ok(Reformulated { text: trimmed.to_string(), fell_back: false })
    }
}
