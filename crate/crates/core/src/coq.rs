//! Chain-of-Query representation and the line-oriented text format exchanged
//! with the language model.
//!
//! ```text
//! [Query 1]: Who directed Jaws?
//! [Answer 1]: Steven Spielberg
//! [Query 2]: When was Steven Spielberg born?
//! [Unsolved Query]
//! [Final Answer]: ...
//! ```
//!
//! Parsing is total: every deviation from the grammar is reported as a
//! [`Violation`], and only structural problems (no queries, broken numbering,
//! empty queries) prevent a chain from being produced.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use crate::text::normalize as normalize_query;

/// One `(query, answer)` node of a chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoqNode {
    pub index: usize,
    pub query: String,
    pub answer: Option<String>,
    pub unsolved: bool,
}

impl CoqNode {
    pub fn solved(index: usize, query: impl Into<String>, answer: impl Into<String>) -> Self {
        Self { index, query: query.into(), answer: Some(answer.into()), unsolved: false }
    }

    pub fn unsolved(index: usize, query: impl Into<String>) -> Self {
        Self { index, query: query.into(), answer: None, unsolved: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChainOfQuery {
    pub nodes: Vec<CoqNode>,
    pub final_answer: Option<String>,
}

impl ChainOfQuery {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based line number in the raw generation (0 when not tied to a line).
    pub line: usize,
    pub message: String,
    pub fatal: bool,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.fatal { "fatal" } else { "warning" };
        write!(f, "line {}: {kind}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub chain: Option<ChainOfQuery>,
    pub violations: Vec<Violation>,
}

impl ParseReport {
    pub fn has_fatal(&self) -> bool {
        self.violations.iter().any(|v| v.fatal)
    }
}

static QUERY_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[Query (\d+)\]:[ \t]?(.*)$").unwrap());
static ANSWER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[Answer (\d+)\]:[ \t]?(.*)$").unwrap());
static UNSOLVED_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[Unsolved Query\](?::[ \t]?(.*))?$").unwrap());
static FINAL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[Final Answer\]:[ \t]?(.*)$").unwrap());

/// Field that continuation lines are appended to.
#[derive(Clone, Copy)]
enum Field {
    None,
    Query,
    Answer,
    Unsolved,
    Final,
}

struct PendingNode {
    index: usize,
    line: usize,
    query: String,
    answer: Option<String>,
    unsolved: bool,
}

pub fn parse_coq(raw: &str) -> ParseReport {
    let mut violations = Vec::new();
    let mut nodes: Vec<PendingNode> = Vec::new();
    let mut final_answer: Option<String> = None;
    let mut final_count = 0usize;
    let mut field = Field::None;

    let warn = |violations: &mut Vec<Violation>, line: usize, message: String| {
        violations.push(Violation { line, message, fatal: false });
    };

    for (i, raw_line) in raw.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.trim_end_matches('\r');
        let marker = line.trim_start();

        if let Some(caps) = QUERY_RE.captures(marker) {
            let index = caps[1].parse::<usize>().unwrap_or(0);
            nodes.push(PendingNode {
                index,
                line: line_no,
                query: caps[2].to_owned(),
                answer: None,
                unsolved: false,
            });
            field = Field::Query;
        } else if let Some(caps) = ANSWER_RE.captures(marker) {
            let index = caps[1].parse::<usize>().unwrap_or(0);
            match nodes.last_mut() {
                None => {
                    warn(&mut violations, line_no, "answer before any query; ignored".into());
                    field = Field::None;
                }
                Some(node) if node.unsolved || node.answer.is_some() => {
                    warn(
                        &mut violations,
                        line_no,
                        format!("query {} already resolved; extra answer ignored", node.index),
                    );
                    field = Field::None;
                }
                Some(node) => {
                    if index != node.index {
                        warn(
                            &mut violations,
                            line_no,
                            format!("answer {index} attached to query {}", node.index),
                        );
                    }
                    node.answer = Some(caps[2].to_owned());
                    field = Field::Answer;
                }
            }
        } else if UNSOLVED_RE.is_match(marker) {
            match nodes.last_mut() {
                None => {
                    warn(&mut violations, line_no, "unsolved marker before any query; ignored".into());
                }
                Some(node) if node.answer.is_some() || node.unsolved => {
                    warn(
                        &mut violations,
                        line_no,
                        format!("query {} already resolved; unsolved marker ignored", node.index),
                    );
                }
                Some(node) => node.unsolved = true,
            }
            field = Field::Unsolved;
        } else if let Some(caps) = FINAL_RE.captures(marker) {
            final_count += 1;
            if final_count > 1 {
                warn(&mut violations, line_no, "multiple final answers; last one kept".into());
            }
            final_answer = Some(caps[1].to_owned());
            field = Field::Final;
        } else {
            let target = match field {
                Field::Query => nodes.last_mut().map(|n| &mut n.query),
                Field::Answer => nodes.last_mut().and_then(|n| n.answer.as_mut()),
                Field::Final => final_answer.as_mut(),
                Field::Unsolved | Field::None => None,
            };
            match target {
                Some(text) => {
                    text.push('\n');
                    text.push_str(line);
                }
                None if line.trim().is_empty() => {}
                None => warn(&mut violations, line_no, "text outside any field; ignored".into()),
            }
        }
    }

    if nodes.is_empty() {
        violations.push(Violation { line: 0, message: "no query markers found".into(), fatal: true });
        return ParseReport { chain: None, violations };
    }

    let mut seen = std::collections::HashSet::new();
    for (pos, node) in nodes.iter().enumerate() {
        if !seen.insert(node.index) {
            violations.push(Violation {
                line: node.line,
                message: format!("duplicate index {}", node.index),
                fatal: true,
            });
        } else if node.index != pos + 1 {
            violations.push(Violation {
                line: node.line,
                message: format!("non-consecutive index {} (expected {})", node.index, pos + 1),
                fatal: true,
            });
        }
    }

    let last = nodes.len() - 1;
    let mut chain_nodes = Vec::with_capacity(nodes.len());
    for (pos, node) in nodes.into_iter().enumerate() {
        let query = node.query.trim().to_owned();
        if query.is_empty() {
            violations.push(Violation {
                line: node.line,
                message: format!("empty query {}", node.index),
                fatal: true,
            });
        }
        let answer = node.answer.map(|a| a.trim().to_owned()).filter(|a| !a.is_empty());
        let unsolved = answer.is_none();
        if unsolved && !node.unsolved {
            warn(
                &mut violations,
                node.line,
                format!("query {} has no answer; treated as unsolved", node.index),
            );
        }
        if unsolved && pos != last {
            warn(
                &mut violations,
                node.line,
                format!("unsolved query {} is not the last node", node.index),
            );
        }
        chain_nodes.push(CoqNode { index: node.index, query, answer, unsolved });
    }

    let final_answer = final_answer.map(|a| a.trim().to_owned()).filter(|a| !a.is_empty());
    let fatal = violations.iter().any(|v| v.fatal);
    let chain = (!fatal).then_some(ChainOfQuery { nodes: chain_nodes, final_answer });
    ParseReport { chain, violations }
}

pub fn render_coq(chain: &ChainOfQuery) -> String {
    let mut lines = Vec::with_capacity(chain.nodes.len() * 2 + 1);
    for node in &chain.nodes {
        lines.push(format!("[Query {}]: {}", node.index, node.query));
        match (&node.answer, node.unsolved) {
            (Some(answer), false) => lines.push(format!("[Answer {}]: {answer}", node.index)),
            _ => lines.push("[Unsolved Query]".to_owned()),
        }
    }
    if let Some(final_answer) = &chain.final_answer {
        lines.push(format!("[Final Answer]: {final_answer}"));
    }
    lines.join("\n")
}
