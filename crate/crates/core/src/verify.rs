//! One IR step over a chain node: retrieve the Top-1 document, read an answer
//! span from it, then verify the model's answer or complete an unsolved query.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coq::CoqNode;
use crate::metrics::rouge_l;
use crate::reader::{Reader, ReaderError, ReaderOutput};
use crate::retrieval::{Document, RetrievalError, Retriever};
use crate::text;
use crate::tor::{Ablation, KnowledgeSource, PathEntry, RunConfig, TaskMode};

/// Corrected or completed knowledge handed back to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub query: String,
    pub ir_answer: String,
    pub document: Document,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Feedback {
    Pass,
    Correct(Revision),
    Complete(Revision),
    Finish,
    RetrievalFailed { query: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackKind {
    Pass,
    Correct,
    Complete,
    Finish,
    RetrievalFailed,
}

impl Feedback {
    pub fn kind(&self) -> FeedbackKind {
        match self {
            Feedback::Pass => FeedbackKind::Pass,
            Feedback::Correct(_) => FeedbackKind::Correct,
            Feedback::Complete(_) => FeedbackKind::Complete,
            Feedback::Finish => FeedbackKind::Finish,
            Feedback::RetrievalFailed { .. } => FeedbackKind::RetrievalFailed,
        }
    }

    /// The revision carried by `Correct` and `Complete`.
    pub fn revision(&self) -> Option<&Revision> {
        match self {
            Feedback::Correct(r) | Feedback::Complete(r) => Some(r),
            _ => None,
        }
    }

    /// Pass-like feedback lets traversal continue with the next node.
    pub fn is_pass_like(&self) -> bool {
        matches!(self, Feedback::Pass | Feedback::RetrievalFailed { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub consistent: bool,
    pub rouge_score: Option<f64>,
}

/// Short-form: the normalized reader span occurs inside the normalized answer.
/// Long-form: ROUGE-L between the answer and the document exceeds `alpha`.
pub fn check_consistency(
    answer: &str,
    reader_answer: &str,
    doc: &Document,
    mode: TaskMode,
    alpha: f64,
) -> ConsistencyVerdict {
    match mode {
        TaskMode::ShortForm => ConsistencyVerdict {
            consistent: text::normalize(answer).contains(&text::normalize(reader_answer)),
            rouge_score: None,
        },
        TaskMode::LongForm => {
            let score = rouge_l(answer, &doc.text);
            ConsistencyVerdict { consistent: score > alpha, rouge_score: Some(score) }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("prompt slot {0} must not be empty")]
    EmptySlot(&'static str),
}

fn feedback_prompt(
    verb: &str,
    query: &str,
    answer: &str,
    doc: &Document,
    question: &str,
) -> Result<String, PromptError> {
    for (slot, value) in [("query", query), ("answer", answer), ("reference", &doc.text), ("question", question)] {
        if value.trim().is_empty() {
            return Err(PromptError::EmptySlot(slot));
        }
    }
    Ok(format!(
        "According to the Reference, the answer for {query} should be {answer}, you can {verb} your answer and continue constructing the reasoning chain for [Question]: {question}. Reference: {}.",
        doc.text
    ))
}

/// Feedback prompt asking the model to replace a wrong answer.
pub fn build_verify_prompt(
    query: &str,
    reader_answer: &str,
    doc: &Document,
    question: &str,
) -> Result<String, PromptError> {
    feedback_prompt("change", query, reader_answer, doc, question)
}

/// Feedback prompt supplying an answer for an unsolved query.
pub fn build_complete_prompt(
    query: &str,
    reader_answer: &str,
    doc: &Document,
    question: &str,
) -> Result<String, PromptError> {
    feedback_prompt("give", query, reader_answer, doc, question)
}

#[derive(Debug, Error)]
pub enum IrError {
    #[error("retrieval failed: {0}")]
    Retrieval(#[source] RetrievalError),
    #[error("reader failed: {0}")]
    Reader(#[from] ReaderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Result of one IR step: the feedback plus the node to record on the correct path.
#[derive(Debug, Clone, PartialEq)]
pub struct IrOutcome {
    pub feedback: Feedback,
    pub record: Option<PathEntry>,
    pub reading: Option<ReaderOutput>,
}

fn reference_for_prompt(doc: &Document, max_chars: Option<usize>) -> Document {
    match max_chars {
        Some(limit) if doc.text.chars().count() > limit => {
            let mut truncated = doc.clone();
            truncated.text = doc.text.chars().take(limit).collect();
            truncated
        }
        _ => doc.clone(),
    }
}

pub fn ir_step(
    node: &CoqNode,
    root_question: &str,
    retriever: &dyn Retriever,
    reader: &dyn Reader,
    config: &RunConfig,
) -> Result<IrOutcome, IrError> {
    let doc = match retriever.retrieve_top1(&node.query) {
        Ok(doc) => doc,
        Err(RetrievalError::NoMatch(_)) => {
            return Ok(IrOutcome {
                feedback: Feedback::RetrievalFailed { query: node.query.clone() },
                record: None,
                reading: None,
            });
        }
        Err(e) => return Err(IrError::Retrieval(e)),
    };
    let reading = reader.read(&node.query, &doc)?;

    let answer = match (&node.answer, node.unsolved) {
        (Some(answer), false) => answer,
        _ => {
            if config.has(Ablation::NoCompletion) {
                return Ok(IrOutcome { feedback: Feedback::Pass, record: None, reading: Some(reading) });
            }
            let reference = reference_for_prompt(&doc, config.reference_max_chars);
            let prompt = build_complete_prompt(&node.query, &reading.answer, &reference, root_question)?;
            let record = PathEntry {
                query: node.query.clone(),
                answer: reading.answer.clone(),
                document: doc.clone(),
                source: KnowledgeSource::CompletedByIr,
            };
            let revision = Revision {
                query: node.query.clone(),
                ir_answer: reading.answer.clone(),
                document: doc,
                prompt,
            };
            return Ok(IrOutcome {
                feedback: Feedback::Complete(revision),
                record: Some(record),
                reading: Some(reading),
            });
        }
    };

    if !config.has(Ablation::NoVerification) && reading.confidence > config.theta {
        let verdict = check_consistency(answer, &reading.answer, &doc, config.mode, config.alpha);
        if !verdict.consistent {
            let reference = reference_for_prompt(&doc, config.reference_max_chars);
            let prompt = build_verify_prompt(&node.query, &reading.answer, &reference, root_question)?;
            let record = PathEntry {
                query: node.query.clone(),
                answer: reading.answer.clone(),
                document: doc.clone(),
                source: KnowledgeSource::CorrectedByIr,
            };
            let revision = Revision {
                query: node.query.clone(),
                ir_answer: reading.answer.clone(),
                document: doc,
                prompt,
            };
            return Ok(IrOutcome {
                feedback: Feedback::Correct(revision),
                record: Some(record),
                reading: Some(reading),
            });
        }
    }

    let record = PathEntry {
        query: node.query.clone(),
        answer: answer.clone(),
        document: doc,
        source: KnowledgeSource::FromLlm,
    };
    Ok(IrOutcome { feedback: Feedback::Pass, record: Some(record), reading: Some(reading) })
}
