//! Token estimation and content segmentation for raw resources.

use crate::error::{Error, Result};

/// Estimated token count: whitespace-token count times `ratio`, rounded up.
/// Estimates gate segmentation and window packing only.
pub fn estimate_tokens(text: &str, ratio: f64) -> usize {
    let words = text.split_whitespace().count();
    ((words as f64) * ratio).ceil() as usize
}

/// One segmentation output: a chunk that fits under the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub title: String,
    pub text: String,
    pub token_estimate: usize,
}

/// Split a resource into chunks of at most `threshold` estimated tokens.
///
/// Chapters are honored as natural boundaries when provided; without them,
/// Markdown-style headings (`#` lines) act as a fallback. Any section that
/// still exceeds the threshold is truncation-split at the last whitespace
/// before the limit. No text is lost except the whitespace consumed at
/// forced split points, and order is preserved.
pub fn segment(
    id: &str,
    title: &str,
    body: &str,
    chapters: &[(String, String)],
    threshold: usize,
    ratio: f64,
) -> Result<Vec<Chunk>> {
    if threshold == 0 {
        return Err(Error::InvalidArgument("segment: threshold must be >= 1".to_string()));
    }
    let max_words = (threshold as f64 / ratio).floor() as usize;
    if max_words == 0 {
        return Err(Error::InvalidArgument(format!(
            "segment: threshold {threshold} is below one estimated token at ratio {ratio}"
        )));
    }
    let sections: Vec<(String, &str)> = if !chapters.is_empty() {
        chapters
            .iter()
            .map(|(chapter_title, chapter_body)| {
                let combined = if chapter_title.is_empty() {
                    title.to_string()
                } else {
                    format!("{title} — {chapter_title}")
                };
                (combined, chapter_body.as_str())
            })
            .collect()
    } else {
        split_markdown_sections(title, body)
    };
    if sections.iter().all(|(_, text)| text.trim().is_empty()) {
        return Err(Error::EmptyBody { id: id.to_string() });
    }

    let mut chunks = Vec::new();
    for (section_title, section_text) in sections {
        if section_text.trim().is_empty() {
            continue;
        }
        let estimate = estimate_tokens(section_text, ratio);
        if estimate <= threshold {
            chunks.push(Chunk {
                title: section_title,
                text: section_text.to_string(),
                token_estimate: estimate,
            });
        } else {
            for piece in truncation_split(section_text, max_words) {
                chunks.push(Chunk {
                    title: section_title.clone(),
                    text: piece.to_string(),
                    token_estimate: estimate_tokens(piece, ratio),
                });
            }
        }
    }
    Ok(chunks)
}

/// Fallback boundary detection: each `#`-heading line starts a new section.
/// Heading lines stay inside the section text so nothing is lost.
fn split_markdown_sections<'a>(title: &str, body: &'a str) -> Vec<(String, &'a str)> {
    let mut boundaries = Vec::new();
    let mut offset = 0;
    for line in body.split_inclusive('\n') {
        if line.trim_start().starts_with('#') && offset > 0 {
            boundaries.push(offset);
        }
        offset += line.len();
    }
    if boundaries.is_empty() {
        return vec![(title.to_string(), body)];
    }
    let mut sections = Vec::new();
    let mut start = 0;
    for boundary in boundaries.into_iter().chain(std::iter::once(body.len())) {
        let text = &body[start..boundary];
        let heading = text
            .lines()
            .find(|l| l.trim_start().starts_with('#'))
            .map(|l| l.trim_start_matches(['#', ' ']).trim())
            .filter(|h| !h.is_empty());
        let section_title = match heading {
            Some(h) => format!("{title} — {h}"),
            None => title.to_string(),
        };
        sections.push((section_title, text));
        start = boundary;
    }
    sections
}

/// Split into word-boundary pieces of at most `max_words` words each,
/// preserving the original inter-word whitespace inside every piece.
fn truncation_split(text: &str, max_words: usize) -> Vec<&str> {
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut word_start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(start) = word_start.take() {
                spans.push((start, i));
            }
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    if let Some(start) = word_start {
        spans.push((start, text.len()));
    }
    spans
        .chunks(max_words)
        .map(|group| &text[group[0].0..group[group.len() - 1].1])
        .collect()
}
