//! Final answer generation from packed evidence and CoT.

use serde::{Deserialize, Serialize};

use crate::config::CotMode;
use crate::corpus::CorpusIndex;
use crate::error::{Error, Result};
use crate::gateway::{Decoding, Gateway};
use crate::pipeline::PipelineResult;
use crate::prompts::{render, PromptSet};

/// One few-shot demonstration for the answer prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoShot {
    pub question: String,
    pub reasoning: String,
    pub answer: String,
}

/// The target model's completion, plus the extracted option label when the
/// question was multiple-choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub text: String,
    /// `Some(label)` or `Some("unparsed")` for multiple-choice questions;
    /// `None` for free-form questions.
    pub extracted: Option<String>,
}

/// First standalone A–E token in the completion.
pub fn extract_option_letter(text: &str) -> Option<char> {
    let bytes = text.as_bytes();
    for (i, c) in text.char_indices() {
        if !('A'..='E').contains(&c) {
            continue;
        }
        let prev_ok = i == 0 || !(bytes[i - 1] as char).is_ascii_alphanumeric();
        let next_ok = i + 1 >= bytes.len() || !(bytes[i + 1] as char).is_ascii_alphanumeric();
        if prev_ok && next_ok {
            return Some(c);
        }
    }
    None
}

/// Prompt the target model with packed evidence, the final CoT (as a worked
/// demonstration or inline reasoning), optional few-shot examples, and the
/// question. With no evidence, no CoT, and no options the prompt degrades to
/// a direct-response form.
#[allow(clippy::too_many_arguments)]
pub async fn answer(
    query: &str,
    options: &[(String, String)],
    result: &PipelineResult,
    index: &CorpusIndex,
    gateway: &Gateway,
    prompts: &PromptSet,
    cot_mode: CotMode,
    shots: &[DemoShot],
) -> Result<AnswerOutcome> {
    if query.is_empty() {
        return Err(Error::InvalidArgument("answer: empty query".to_string()));
    }

    let mut shots_block = String::new();
    for shot in shots {
        shots_block.push_str(&format!(
            "# Example\nQuestion: {}\nReasoning: {}\nAnswer: {}\n\n",
            shot.question, shot.reasoning, shot.answer
        ));
    }

    let evidence_block = if result.final_packed.is_empty() {
        String::new()
    } else {
        let mut block = String::from("# Retrieved Evidence\n");
        for evidence in &result.final_packed {
            if let Some(doc) = index.get(&evidence.doc_id) {
                block.push_str(&format!("[{}] {}\n{}\n", doc.doc_id, doc.title, doc.text));
            }
        }
        block.push('\n');
        block
    };

    let reasoning_block = if result.final_cot.is_empty() {
        String::new()
    } else {
        match cot_mode {
            CotMode::Demonstration => format!(
                "# Demonstrated Reasoning\nThe following worked reasoning shows how to analyze the evidence:\n{}\n\n",
                result.final_cot
            ),
            CotMode::Inline => format!("# Reasoning\n{}\n\n", result.final_cot),
        }
    };

    let options_block = if options.is_empty() {
        String::new()
    } else {
        let mut block = String::from("# Options\n");
        for (label, text) in options {
            block.push_str(&format!("({label}) {text}\n"));
        }
        block.push('\n');
        block
    };

    let instruction = if options.is_empty() {
        "Provide a direct, concise answer."
    } else {
        "State your final answer as a single option letter, e.g. \"The answer is (B).\""
    };

    let prompt = render(
        &prompts.final_answer,
        &[
            ("shots_block", shots_block.as_str()),
            ("evidence_block", evidence_block.as_str()),
            ("reasoning_block", reasoning_block.as_str()),
            ("question", query),
            ("options_block", options_block.as_str()),
            ("instruction", instruction),
        ],
    );
    let text = gateway.complete(&prompt, &Decoding::text()).await?;

    let extracted = if options.is_empty() {
        None
    } else {
        let label = extract_option_letter(&text)
            .map(|c| c.to_string())
            .filter(|l| options.iter().any(|(label, _)| label == l))
            .unwrap_or_else(|| "unparsed".to_string());
        Some(label)
    };
    Ok(AnswerOutcome { text, extracted })
}
