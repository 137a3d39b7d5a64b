//! Answer-span extraction from a `(query, document)` pair.
//!
//! Two backends implement [`Reader`]: a client for a remote neural reader
//! service, and [`LexicalReader`], a deterministic rule-based stand-in.
//!
//! The lexical rule:
//!
//! 1. Query terms are the distinct lowercased terms of the query that are not
//!    function words.
//! 2. The selected sentence is the one containing the most distinct query
//!    terms (earliest on ties).
//! 3. Entity tokens are capitalized words or tokens starting with a digit
//!    that are neither query terms nor function words. The answer is the
//!    longest run of consecutive entity tokens; ties prefer the run closest
//!    after the last matched query term, then the closest run before it.
//!    Without any entity token the answer is the whole sentence.
//! 4. `confidence = 2 * matched / |query terms| + (1 if an entity run exists)`,
//!    so it lies in `[0, 3]`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{HttpError, JsonClient};
use crate::retrieval::Document;
use crate::text;

/// Extracted span `g` with confidence `f`; offsets are character offsets into
/// the document text, end exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderOutput {
    pub answer: String,
    pub confidence: f64,
    pub span_start: usize,
    pub span_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReaderKind {
    RemoteNeural,
    LexicalBaseline,
}

#[derive(Debug, Error)]
pub enum ReaderError {
    #[error("document {0:?} has no text")]
    EmptyDocument(String),
    #[error(transparent)]
    Backend(#[from] HttpError),
    #[error("reader span [{start}, {end}) is not a valid answer span for the document")]
    InvalidSpan { start: usize, end: usize },
}

pub trait Reader: Send + Sync {
    fn kind(&self) -> ReaderKind;

    /// Describes the range of `confidence` so the gate threshold can be set per backend.
    fn confidence_scale_note(&self) -> &str;

    fn read(&self, query: &str, doc: &Document) -> Result<ReaderOutput, ReaderError>;
}

/// Checks that `output.answer` is exactly the document substring its offsets name.
pub fn check_span(output: &ReaderOutput, doc: &Document) -> Result<(), ReaderError> {
    let invalid = || ReaderError::InvalidSpan { start: output.span_start, end: output.span_end };
    if output.span_start >= output.span_end {
        return Err(invalid());
    }
    match text::char_slice(&doc.text, output.span_start, output.span_end) {
        Some(slice) if slice == output.answer => Ok(()),
        _ => Err(invalid()),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalReader;

struct Token {
    start: usize,
    end: usize,
    term: Option<String>,
    entity: bool,
}

impl LexicalReader {
    fn tokens(doc_text: &str, span: (usize, usize), query_terms: &[String]) -> Vec<Token> {
        text::token_spans(doc_text, span.0, span.1)
            .into_iter()
            .map(|(s, e)| {
                let raw = &doc_text[s..e];
                let lead = raw.len() - raw.trim_start_matches(|c: char| !c.is_alphanumeric()).len();
                let core = raw.trim_matches(|c: char| !c.is_alphanumeric());
                let term = text::term_of(raw);
                let entity = match (&term, core.chars().next()) {
                    (Some(t), Some(first)) => {
                        (first.is_uppercase() || first.is_ascii_digit())
                            && !query_terms.contains(t)
                            && !text::is_stopword(t)
                    }
                    _ => false,
                };
                Token { start: s + lead, end: s + lead + core.len(), term, entity }
            })
            .collect()
    }
}

impl Reader for LexicalReader {
    fn kind(&self) -> ReaderKind {
        ReaderKind::LexicalBaseline
    }

    fn confidence_scale_note(&self) -> &str {
        "lexical baseline: confidence in [0, 3]; full term match with an entity span scores 3"
    }

    fn read(&self, query: &str, doc: &Document) -> Result<ReaderOutput, ReaderError> {
        let sentences = text::sentence_spans(&doc.text);
        if sentences.is_empty() {
            return Err(ReaderError::EmptyDocument(doc.id.clone()));
        }
        let mut query_terms: Vec<String> = Vec::new();
        for term in text::terms(query) {
            if !text::is_stopword(&term) && !query_terms.contains(&term) {
                query_terms.push(term);
            }
        }

        let mut best: Option<(usize, Vec<Token>, (usize, usize))> = None;
        for &span in &sentences {
            let tokens = Self::tokens(&doc.text, span, &query_terms);
            let matched = query_terms
                .iter()
                .filter(|q| tokens.iter().any(|t| t.term.as_ref() == Some(*q)))
                .count();
            if best.as_ref().is_none_or(|(m, _, _)| matched > *m) {
                best = Some((matched, tokens, span));
            }
        }
        let (matched, tokens, sentence) = best.expect("at least one sentence");

        let last_match = tokens
            .iter()
            .rposition(|t| t.term.as_ref().is_some_and(|term| query_terms.contains(term)));

        let mut runs: Vec<(usize, usize)> = Vec::new();
        let mut run_start = None;
        for (i, tok) in tokens.iter().enumerate() {
            match (tok.entity, run_start) {
                (true, None) => run_start = Some(i),
                (false, Some(s)) => {
                    runs.push((s, i - 1));
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = run_start {
            runs.push((s, tokens.len() - 1));
        }

        let chosen = runs.iter().copied().min_by_key(|&(s, e)| {
            let length = e - s + 1;
            let (side, distance) = match last_match {
                Some(m) if s > m => (0, s - m),
                Some(m) => (1, m.saturating_sub(e)),
                None => (0, s),
            };
            (std::cmp::Reverse(length), side, distance, s)
        });

        let (start, end) = match chosen {
            Some((s, e)) => (tokens[s].start, tokens[e].end),
            None => sentence,
        };
        let term_score = if query_terms.is_empty() {
            0.0
        } else {
            2.0 * matched as f64 / query_terms.len() as f64
        };
        let entity_bonus = if chosen.is_some() { 1.0 } else { 0.0 };

        Ok(ReaderOutput {
            answer: doc.text[start..end].to_owned(),
            confidence: term_score + entity_bonus,
            span_start: text::char_offset(&doc.text, start),
            span_end: text::char_offset(&doc.text, end),
        })
    }
}

#[derive(Debug, Serialize)]
struct RemoteRequest<'a> {
    query: &'a str,
    document_text: &'a str,
}

#[derive(Debug, Deserialize)]
struct RemoteResponse {
    answer: String,
    confidence: f64,
    start: usize,
    end: usize,
}

/// Client for a remote extractive reader:
/// `{query, document_text}` → `{answer, confidence, start, end}`.
#[derive(Debug, Clone)]
pub struct RemoteReader {
    client: JsonClient,
    note: String,
}

impl RemoteReader {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            client: JsonClient::new(endpoint, timeout),
            note: "remote neural reader: confidence is the service's unbounded answerability score".into(),
        }
    }

    pub fn with_scale_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

impl Reader for RemoteReader {
    fn kind(&self) -> ReaderKind {
        ReaderKind::RemoteNeural
    }

    fn confidence_scale_note(&self) -> &str {
        &self.note
    }

    fn read(&self, query: &str, doc: &Document) -> Result<ReaderOutput, ReaderError> {
        if doc.text.trim().is_empty() {
            return Err(ReaderError::EmptyDocument(doc.id.clone()));
        }
        let response: RemoteResponse =
            self.client.post(&RemoteRequest { query, document_text: &doc.text })?;
        let output = ReaderOutput {
            answer: response.answer,
            confidence: response.confidence,
            span_start: response.start,
            span_end: response.end,
        };
        check_span(&output, doc)?;
        Ok(output)
    }
}
