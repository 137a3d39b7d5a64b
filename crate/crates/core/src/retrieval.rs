//! Top-1 document retrieval.
//!
//! [`LexicalIndex`] is an in-memory BM25 index used for offline runs and tests;
//! [`RemoteRetriever`] forwards queries to a dense retrieval service. Both sit
//! behind the [`Retriever`] trait and are interchangeable inside a run.
//!
//! ```text
//! score(D, Q) = sum over distinct q in Q of
//!     idf(q) * tf(q, D) * (k1 + 1) / (tf(q, D) + k1 * (1 - b + b * |D| / avgdl))
//! idf(q) = ln(1 + (N - n(q) + 0.5) / (n(q) + 0.5))
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{HttpError, JsonClient};
use crate::text;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), title: title.into(), text: text.into() }
    }
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),
    #[error("document {0:?} has empty text")]
    EmptyDocumentText(String),
    #[error("no document shares a term with query {0:?}")]
    NoMatch(String),
    #[error(transparent)]
    Backend(#[from] HttpError),
    #[error("remote retriever returned {0} documents, expected exactly one")]
    WrongDocumentCount(usize),
    #[error("{path}:{line}: {reason}")]
    CorpusFormat { path: String, line: usize, reason: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// A source of Top-1 supporting documents.
pub trait Retriever: Send + Sync {
    fn retrieve_top1(&self, query: &str) -> Result<Document, RetrievalError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: usize,
    pub tf: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LexicalIndex {
    documents: Vec<Document>,
    postings: HashMap<String, Vec<Posting>>,
    doc_lengths: Vec<usize>,
    avg_doc_length: f64,
}

/// Terms indexed for a document: title followed by body.
pub fn document_terms(doc: &Document) -> Vec<String> {
    let mut terms = text::terms(&doc.title);
    terms.extend(text::terms(&doc.text));
    terms
}

impl LexicalIndex {
    pub fn build(corpus: Vec<Document>) -> Result<Self, RetrievalError> {
        if corpus.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut ids = HashSet::with_capacity(corpus.len());
        for doc in &corpus {
            if !ids.insert(doc.id.as_str()) {
                return Err(RetrievalError::DuplicateDocId(doc.id.clone()));
            }
            if doc.text.trim().is_empty() {
                return Err(RetrievalError::EmptyDocumentText(doc.id.clone()));
            }
        }

        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        for (pos, doc) in corpus.iter().enumerate() {
            let terms = document_terms(doc);
            doc_lengths.push(terms.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for term in terms {
                *tf.entry(term).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting { doc: pos, tf: count });
            }
        }
        for list in postings.values_mut() {
            list.sort_unstable_by_key(|p| p.doc);
        }
        let avg_doc_length = doc_lengths.iter().sum::<usize>() as f64 / doc_lengths.len() as f64;
        Ok(Self { documents: corpus, postings, doc_lengths, avg_doc_length })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn doc_lengths(&self) -> &[usize] {
        &self.doc_lengths
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.postings.get(term).map(Vec::as_slice)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    /// BM25 scores for every document, or `None` if no query term is indexed.
    pub fn scores(&self, query: &str) -> Option<Vec<f64>> {
        let n = self.documents.len() as f64;
        let mut scores = vec![0.0; self.documents.len()];
        let mut matched = false;
        let mut seen = HashSet::new();
        for term in text::terms(query) {
            if !seen.insert(term.clone()) {
                continue;
            }
            let Some(list) = self.postings.get(&term) else { continue };
            matched = true;
            let df = list.len() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for posting in list {
                let tf = f64::from(posting.tf);
                let dl = self.doc_lengths[posting.doc] as f64;
                let norm = BM25_K1 * (1.0 - BM25_B + BM25_B * dl / self.avg_doc_length);
                scores[posting.doc] += idf * tf * (BM25_K1 + 1.0) / (tf + norm);
            }
        }
        matched.then_some(scores)
    }

    /// Position of the best-scoring document; ties go to the smaller position.
    pub fn top1_position(&self, query: &str) -> Option<usize> {
        let scores = self.scores(query)?;
        let mut best = 0;
        for (pos, &score) in scores.iter().enumerate().skip(1) {
            if score > scores[best] {
                best = pos;
            }
        }
        Some(best)
    }

    pub fn retrieve_top1(&self, query: &str) -> Result<&Document, RetrievalError> {
        self.top1_position(query)
            .map(|pos| &self.documents[pos])
            .ok_or_else(|| RetrievalError::NoMatch(query.to_owned()))
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let io = |source| RetrievalError::Io { path: path.display().to_string(), source };
        let mut writer = BufWriter::new(File::create(path).map_err(io)?);
        serde_json::to_writer(&mut writer, self).map_err(|e| io(e.into()))?;
        writer.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let io = |source| RetrievalError::Io { path: path.display().to_string(), source };
        let reader = BufReader::new(File::open(path).map_err(io)?);
        serde_json::from_reader(reader).map_err(|e| io(e.into()))
    }
}

impl Retriever for LexicalIndex {
    fn retrieve_top1(&self, query: &str) -> Result<Document, RetrievalError> {
        LexicalIndex::retrieve_top1(self, query).cloned()
    }
}

/// Reads a corpus file: one JSON object `{id, title, text}` per line.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>, RetrievalError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| RetrievalError::Io { path: display.clone(), source })?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| RetrievalError::Io { path: display.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| RetrievalError::CorpusFormat {
            path: display.clone(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

#[derive(Debug, Serialize)]
struct RemoteRequest<'a> {
    query: &'a str,
    k: usize,
}

#[derive(Debug, Deserialize)]
struct RemoteResponse {
    documents: Vec<RemoteDocument>,
}

#[derive(Debug, Deserialize)]
struct RemoteDocument {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
    #[allow(dead_code)]
    #[serde(default)]
    score: Option<f64>,
}

/// Client for a remote retriever speaking `{query, k}` → `{documents: [...]}`.
#[derive(Debug, Clone)]
pub struct RemoteRetriever {
    client: JsonClient,
}

impl RemoteRetriever {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self { client: JsonClient::new(endpoint, timeout) }
    }
}

impl Retriever for RemoteRetriever {
    fn retrieve_top1(&self, query: &str) -> Result<Document, RetrievalError> {
        let response: RemoteResponse = self.client.post(&RemoteRequest { query, k: 1 })?;
        let mut docs = response.documents;
        match docs.len() {
            0 => Err(RetrievalError::NoMatch(query.to_owned())),
            1 => {
                let d = docs.pop().unwrap();
                Ok(Document { id: d.id, title: d.title, text: d.text })
            }
            n => Err(RetrievalError::WrongDocumentCount(n)),
        }
    }
}
