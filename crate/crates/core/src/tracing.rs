//! Final content generation and reference marking.
//!
//! The model writes the final content from the correct path's query/answer
//! pairs; the engine then anchors a `[k]` mark after the first occurrence of
//! each answer and builds the reference table mapping marks to supporting
//! documents.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;
use crate::tor::CorrectPath;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TracingError {
    #[error("correct path is empty")]
    EmptyPath,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub mark: usize,
    pub query: String,
    pub document_id: String,
    /// Character span of the anchored answer in the marked text.
    pub char_span: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FinalContent {
    /// Content with inline `[k]` marks.
    pub text: String,
    /// Content as generated, without marks.
    pub source_text: String,
    pub references: Vec<Reference>,
}

pub fn build_tracing_prompt(path: &CorrectPath) -> Result<String, TracingError> {
    if path.is_empty() {
        return Err(TracingError::EmptyPath);
    }
    let pairs = path
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| format!("[Query {k}]: {}. [Answer {k}]: {}", e.query, e.answer, k = i + 1))
        .collect::<Vec<_>>()
        .join(". ");
    Ok(format!(
        "You can try to generate the final answer for the [Question] by referring to the [Query]-[Answer] pairs, starting with [Final Content]. {pairs}."
    ))
}

/// Drops a leading `[Final Content]` marker (with optional colon) from a generation.
pub fn strip_final_content_marker(generation: &str) -> &str {
    let trimmed = generation.trim();
    match trimmed.strip_prefix("[Final Content]") {
        Some(rest) => rest.strip_prefix(':').unwrap_or(rest).trim(),
        None => trimmed,
    }
}

/// Lowercased, whitespace-collapsed view of a string with a map back to
/// original character positions.
struct NormalizedView {
    chars: Vec<char>,
    origin: Vec<usize>,
}

impl NormalizedView {
    fn new(source: &[char]) -> Self {
        let mut chars = Vec::with_capacity(source.len());
        let mut origin = Vec::with_capacity(source.len());
        let mut in_space = false;
        for (i, c) in source.iter().enumerate() {
            if c.is_whitespace() {
                if !in_space {
                    chars.push(' ');
                    origin.push(i);
                }
                in_space = true;
            } else {
                in_space = false;
                for lower in c.to_lowercase() {
                    chars.push(lower);
                    origin.push(i);
                }
            }
        }
        Self { chars, origin }
    }

    /// Original `[start, end)` ranges of every occurrence of `needle`.
    fn occurrences<'a>(&'a self, needle: &'a [char]) -> impl Iterator<Item = (usize, usize)> + 'a {
        (0..self.chars.len().saturating_sub(needle.len() - 1))
            .filter(move |&i| self.chars[i..i + needle.len()] == *needle)
            .map(move |i| (self.origin[i], self.origin[i + needle.len() - 1] + 1))
    }
}

pub fn attach_references(final_text: &str, path: &CorrectPath) -> FinalContent {
    let source: Vec<char> = final_text.chars().collect();
    let view = NormalizedView::new(&source);

    let mut order: Vec<(usize, Vec<char>)> = path
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (i, text::normalize(&e.answer).chars().collect()))
        .collect();
    order.sort_by_key(|(i, needle)| (std::cmp::Reverse(needle.len()), *i));

    let mut anchors: Vec<(usize, usize, usize)> = Vec::new();
    for (entry, needle) in &order {
        if needle.is_empty() {
            continue;
        }
        let free = view
            .occurrences(needle)
            .find(|&(s, e)| anchors.iter().all(|&(_, as_, ae)| e <= as_ || s >= ae));
        if let Some((s, e)) = free {
            anchors.push((*entry, s, e));
        }
    }
    anchors.sort_by_key(|&(_, s, e)| (e, s));

    let mut text = String::with_capacity(final_text.len() + anchors.len() * 4);
    let mut references = Vec::with_capacity(path.len());
    let mut out_len = 0usize;
    let mut next = anchors.iter().enumerate().peekable();
    let mut spans_out = vec![None; anchors.len()];
    let mut offset = 0usize;
    for (i, c) in source.iter().enumerate() {
        text.push(*c);
        out_len += 1;
        while let Some(&(k, &(_, s, e))) = next.peek() {
            if e != i + 1 {
                break;
            }
            spans_out[k] = Some((s + offset, e + offset));
            let mark = format!("[{}]", k + 1);
            out_len += mark.chars().count();
            offset += mark.chars().count();
            text.push_str(&mark);
            next.next();
        }
    }
    debug_assert_eq!(out_len, text.chars().count());

    for (k, &(entry, _, _)) in anchors.iter().enumerate() {
        let e = &path.entries[entry];
        references.push(Reference {
            mark: k + 1,
            query: e.query.clone(),
            document_id: e.document.id.clone(),
            char_span: spans_out[k],
        });
    }
    for (i, e) in path.entries.iter().enumerate() {
        if anchors.iter().any(|&(entry, _, _)| entry == i) {
            continue;
        }
        references.push(Reference {
            mark: references.len() + 1,
            query: e.query.clone(),
            document_id: e.document.id.clone(),
            char_span: None,
        });
    }

    FinalContent { text, source_text: final_text.to_owned(), references }
}

/// Scope of knowledge coverage: number of anchored references.
pub fn skc(content: &FinalContent) -> usize {
    content.references.iter().filter(|r| r.char_span.is_some()).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// Marked text followed by the reference table.
    #[default]
    Inline,
    /// Unmarked text followed by the reference table.
    Endnotes,
}

pub fn render(content: &FinalContent, layout: Layout) -> String {
    let body = match layout {
        Layout::Inline => &content.text,
        Layout::Endnotes => &content.source_text,
    };
    let mut out = body.clone();
    if !content.references.is_empty() {
        out.push_str("\n\nReferences:");
        for r in &content.references {
            let anchor = if r.char_span.is_some() { "" } else { " (unanchored)" };
            out.push_str(&format!("\n[{}] {} ({}){anchor}", r.mark, r.document_id, r.query));
        }
    }
    out
}
