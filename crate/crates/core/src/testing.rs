//! Deterministic retriever and reader doubles for scripted runs.

use std::collections::HashMap;

use crate::reader::{LexicalReader, Reader, ReaderError, ReaderKind, ReaderOutput};
use crate::retrieval::{Document, RetrievalError, Retriever};
use crate::text;

/// Always returns the same document, or `NoMatch` when empty.
#[derive(Debug, Clone)]
pub struct FixedRetriever(pub Option<Document>);

impl Retriever for FixedRetriever {
    fn retrieve_top1(&self, query: &str) -> Result<Document, RetrievalError> {
        self.0.clone().ok_or_else(|| RetrievalError::NoMatch(query.to_owned()))
    }
}

fn span_for(answer: &str, doc: &Document) -> ReaderOutput {
    match doc.text.find(answer) {
        Some(b) if !answer.is_empty() => ReaderOutput {
            answer: answer.to_owned(),
            confidence: 0.0,
            span_start: text::char_offset(&doc.text, b),
            span_end: text::char_offset(&doc.text, b + answer.len()),
        },
        _ => ReaderOutput {
            answer: answer.to_owned(),
            confidence: 0.0,
            span_start: 0,
            span_end: answer.chars().count().max(1),
        },
    }
}

/// Returns a fixed answer and confidence for every query.
#[derive(Debug, Clone)]
pub struct FixedReader {
    pub answer: String,
    pub confidence: f64,
}

impl FixedReader {
    pub fn new(answer: impl Into<String>, confidence: f64) -> Self {
        Self { answer: answer.into(), confidence }
    }
}

impl Reader for FixedReader {
    fn kind(&self) -> ReaderKind {
        ReaderKind::LexicalBaseline
    }

    fn confidence_scale_note(&self) -> &str {
        "fixed test reader"
    }

    fn read(&self, _query: &str, doc: &Document) -> Result<ReaderOutput, ReaderError> {
        Ok(ReaderOutput { confidence: self.confidence, ..span_for(&self.answer, doc) })
    }
}

/// Looks answers up by normalized query and falls back to [`LexicalReader`].
#[derive(Debug, Clone, Default)]
pub struct TableReader {
    table: HashMap<String, (String, f64)>,
}

impl TableReader {
    pub fn with(mut self, query: &str, answer: &str, confidence: f64) -> Self {
        self.table.insert(text::normalize(query), (answer.to_owned(), confidence));
        self
    }
}

impl Reader for TableReader {
    fn kind(&self) -> ReaderKind {
        ReaderKind::LexicalBaseline
    }

    fn confidence_scale_note(&self) -> &str {
        "table test reader"
    }

    fn read(&self, query: &str, doc: &Document) -> Result<ReaderOutput, ReaderError> {
        match self.table.get(&text::normalize(query)) {
            Some((answer, confidence)) => Ok(ReaderOutput { confidence: *confidence, ..span_for(answer, doc) }),
            None => LexicalReader.read(query, doc),
        }
    }
}
