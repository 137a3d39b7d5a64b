#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use searchain::reader::{LexicalReader, Reader, ReaderError, ReaderKind, ReaderOutput};
use searchain::retrieval::{load_corpus, Document, LexicalIndex};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn demo_index() -> LexicalIndex {
    LexicalIndex::build(load_corpus(&data("corpus.jsonl")).unwrap()).unwrap()
}

/// Lexical reader that counts how often it is consulted.
#[derive(Default)]
pub struct CountingReader {
    pub calls: AtomicUsize,
}

impl CountingReader {
    pub fn count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Reader for CountingReader {
    fn kind(&self) -> ReaderKind {
        ReaderKind::LexicalBaseline
    }

    fn confidence_scale_note(&self) -> &str {
        "counting"
    }

    fn read(&self, query: &str, doc: &Document) -> Result<ReaderOutput, ReaderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        LexicalReader.read(query, doc)
    }
}

/// Lowercase, single spaces, no trailing `?`, `.` or `!`.
pub fn oracle_normalize(s: &str) -> String {
    let mut out = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    while out.ends_with(['?', '.', '!']) {
        out.pop();
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
    }
    out
}

/// Plain recursive LCS with a full memo table.
pub fn oracle_lcs(a: &[u32], b: &[u32]) -> usize {
    fn go(a: &[u32], b: &[u32], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(v) = memo[i][j] {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo[i][j] = Some(v);
        v
    }
    let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
    go(a, b, 0, 0, &mut memo)
}

pub fn oracle_rouge(cand: &[u32], reference: &[u32]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = oracle_lcs(cand, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / cand.len() as f64;
    let r = lcs / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// BM25 (k1 = 1.2, b = 0.75) computed directly from whitespace-tokenized
/// lowercase documents. `None` when no query term occurs anywhere.
pub fn oracle_bm25(docs: &[Vec<String>], query: &[String]) -> Option<Vec<f64>> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut distinct: Vec<&String> = Vec::new();
    for q in query {
        if !distinct.contains(&q) {
            distinct.push(q);
        }
    }
    let mut scores = vec![0.0; docs.len()];
    let mut any = false;
    for term in distinct {
        let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
        if df == 0.0 {
            continue;
        }
        any = true;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        for (i, d) in docs.iter().enumerate() {
            let tf = d.iter().filter(|t| *t == term).count() as f64;
            if tf > 0.0 {
                let dl = d.len() as f64;
                scores[i] += idf * tf * 2.2 / (tf + 1.2 * (1.0 - 0.75 + 0.75 * dl / avgdl));
            }
        }
    }
    any.then_some(scores)
}

/// Minimal HTTP/1.1 server answering each POST with the next canned JSON body.
/// Captured request bodies and headers are returned by `join`.
pub struct MockServer {
    pub url: String,
    handle: JoinHandle<Vec<(String, String)>>,
}

impl MockServer {
    pub fn start(responses: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut headers = String::new();
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                    headers.push_str(&line);
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                seen.push((headers, String::from_utf8(buf).unwrap()));
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            seen
        });
        Self { url, handle }
    }

    pub fn join(self) -> Vec<(String, String)> {
        self.handle.join().unwrap()
    }
}

pub type Shared<T> = Arc<Mutex<T>>;
