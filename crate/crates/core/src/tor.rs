//! The interaction loop between the model and the IR layer.
//!
//! Each round the model generates a Chain-of-Query, which becomes a new branch
//! of the [`TreeOfReasoning`]. The IR layer walks the chain node by node and
//! stops at the first node it corrects or completes; the next branch is then
//! generated from that node (not from its parent). Queries already processed
//! in any earlier round are skipped. The loop ends when a whole chain passes or
//! the round cap is exceeded.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coq::{normalize_query, parse_coq, ChainOfQuery, CoqNode, Violation};
use crate::llm::{
    build_feedback_round_prompt, ChatBackend, Conversation, FewShotExample, HistoryMode, LlmError,
    Message, PromptBundle,
};
use crate::metrics::EfficiencyCounters;
use crate::reader::{Reader, ReaderOutput};
use crate::retrieval::{Document, Retriever};
use crate::text::word_count;
use crate::verify::{ir_step, Feedback, FeedbackKind, IrError, IrOutcome};

pub const DEFAULT_R_MAX: usize = 5;
pub const DEFAULT_THETA: f64 = 1.5;
pub const DEFAULT_ALPHA: f64 = 0.35;

/// Id of the stand-in document attached to path entries when retrieval is ablated.
pub const NO_IR_DOCUMENT_ID: &str = "no-ir";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskMode {
    #[default]
    ShortForm,
    LongForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    NoVerification,
    NoCompletion,
    NoIr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Timing {
    #[default]
    Wall,
    /// Record zero wall time so traces are byte-reproducible.
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub r_max: usize,
    /// Reader-confidence gate; corrections need `confidence > theta`.
    pub theta: f64,
    /// ROUGE-L threshold for long-form consistency.
    pub alpha: f64,
    pub mode: TaskMode,
    #[serde(default)]
    pub ablations: BTreeSet<Ablation>,
    #[serde(default)]
    pub history: HistoryMode,
    /// Truncate the reference passage in feedback prompts; `None` sends it whole.
    #[serde(default)]
    pub reference_max_chars: Option<usize>,
    #[serde(default)]
    pub timing: Timing,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            r_max: DEFAULT_R_MAX,
            theta: DEFAULT_THETA,
            alpha: DEFAULT_ALPHA,
            mode: TaskMode::ShortForm,
            ablations: BTreeSet::new(),
            history: HistoryMode::MultiTurn,
            reference_max_chars: None,
            timing: Timing::Wall,
        }
    }
}

impl RunConfig {
    pub fn has(&self, ablation: Ablation) -> bool {
        self.ablations.contains(&ablation)
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablations.insert(ablation);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KnowledgeSource {
    FromLlm,
    CorrectedByIr,
    CompletedByIr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathEntry {
    pub query: String,
    pub answer: String,
    pub document: Document,
    pub source: KnowledgeSource,
}

/// Verified or IR-supplied nodes, one per normalized query.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorrectPath {
    pub entries: Vec<PathEntry>,
}

impl CorrectPath {
    /// Appends the entry, or replaces the existing entry for the same
    /// normalized query in place.
    pub fn record(&mut self, entry: PathEntry) {
        let key = normalize_query(&entry.query);
        match self.entries.iter_mut().find(|e| normalize_query(&e.query) == key) {
            Some(existing) => *existing = entry,
            None => self.entries.push(entry),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn record_correct(
    mut path: CorrectPath,
    query: &str,
    answer: &str,
    document: Document,
    source: KnowledgeSource,
) -> CorrectPath {
    path.record(PathEntry { query: query.to_owned(), answer: answer.to_owned(), document, source });
    path
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub round: usize,
    pub chain: ChainOfQuery,
    /// Query whose feedback started this branch; `None` for the first branch.
    pub restart_query: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TreeOfReasoning {
    pub root_question: String,
    pub branches: Vec<Branch>,
}

/// One IR step as seen by the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEvent {
    pub round: usize,
    pub query: String,
    pub feedback: FeedbackKind,
    pub document_id: Option<String>,
    pub reader_answer: Option<String>,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InteractionState {
    /// Normalized queries already sent to IR, across all rounds.
    pub processed: BTreeSet<String>,
    pub correct_path: CorrectPath,
    pub rounds_used: usize,
    pub last_feedback: Option<Feedback>,
    pub ir_calls: usize,
    pub events: Vec<NodeEvent>,
}

pub fn duplicate_query(query: &str, processed: &BTreeSet<String>) -> bool {
    processed.contains(&normalize_query(query))
}

/// Walks the chain in order, running `ir` on every node not processed before.
/// Returns the first non-pass feedback, or `Finish` when every node passes or
/// is skipped. Retrieval failures count as passes.
pub fn traverse<E>(
    chain: &ChainOfQuery,
    state: &mut InteractionState,
    mut ir: impl FnMut(&CoqNode) -> Result<IrOutcome, E>,
) -> Result<Feedback, E> {
    for node in &chain.nodes {
        if duplicate_query(&node.query, &state.processed) {
            continue;
        }
        let IrOutcome { feedback, record, reading } = ir(node)?;
        state.ir_calls += 1;
        state.processed.insert(normalize_query(&node.query));
        state.events.push(event(state.rounds_used, node, &feedback, record.as_ref(), reading.as_ref()));
        if let Some(entry) = record {
            state.correct_path.record(entry);
        }
        if !feedback.is_pass_like() {
            state.last_feedback = Some(feedback.clone());
            return Ok(feedback);
        }
    }
    state.last_feedback = Some(Feedback::Finish);
    Ok(Feedback::Finish)
}

fn event(
    round: usize,
    node: &CoqNode,
    feedback: &Feedback,
    record: Option<&PathEntry>,
    reading: Option<&ReaderOutput>,
) -> NodeEvent {
    NodeEvent {
        round,
        query: node.query.clone(),
        feedback: feedback.kind(),
        document_id: record.map(|r| r.document.id.clone()),
        reader_answer: reading.map(|r| r.answer.clone()),
        confidence: reading.map(|r| r.confidence),
    }
}

/// Per-generation log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub restart_query: Option<String>,
    pub input_words: usize,
    pub output_words: usize,
    pub parsed: bool,
    pub violations: Vec<Violation>,
    /// Feedback returned by traversal; `None` when the generation did not parse.
    pub feedback: Option<FeedbackKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub tree: TreeOfReasoning,
    pub path: CorrectPath,
    pub counters: EfficiencyCounters,
    pub rounds: Vec<RoundLog>,
    pub events: Vec<NodeEvent>,
    pub ir_calls: usize,
    pub processed: BTreeSet<String>,
    pub conversation: Vec<Message>,
}

impl Interaction {
    /// Feedback kinds of the parsed rounds, in order.
    pub fn feedback_sequence(&self) -> Vec<FeedbackKind> {
        self.rounds.iter().filter_map(|r| r.feedback).collect()
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("language model: {0}")]
    Llm(#[from] LlmError),
    #[error("ir step: {0}")]
    Ir(#[from] IrError),
    #[error("round {round}: generation unparseable twice in a row for the same restart point")]
    UnparseableGeneration { round: usize, violations: Vec<Violation> },
}

/// A failed run with everything produced before the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct InteractionError {
    #[source]
    pub error: RunError,
    pub partial: Box<Interaction>,
}

pub struct Backends<'a> {
    pub llm: &'a mut dyn ChatBackend,
    pub retriever: &'a dyn Retriever,
    pub reader: &'a dyn Reader,
}

pub fn run_interaction(
    question: &str,
    examples: &[FewShotExample],
    backends: Backends<'_>,
    config: &RunConfig,
) -> Result<Interaction, InteractionError> {
    let started = Instant::now();
    let mut state = InteractionState::default();
    let mut tree = TreeOfReasoning { root_question: question.to_owned(), branches: Vec::new() };
    let mut rounds: Vec<RoundLog> = Vec::new();
    let mut conversation = Conversation::new(config.history);
    let mut counters = EfficiencyCounters::default();

    macro_rules! finish {
        () => {{
            counters.rounds = state.rounds_used;
            counters.wall_time_seconds = match config.timing {
                Timing::Wall => started.elapsed().as_secs_f64(),
                Timing::Disabled => 0.0,
            };
            Interaction {
                tree,
                path: state.correct_path,
                counters,
                rounds,
                events: state.events,
                ir_calls: state.ir_calls,
                processed: state.processed,
                conversation: conversation.history().to_vec(),
            }
        }};
    }
    macro_rules! fail {
        ($err:expr) => {{
            let error = RunError::from($err);
            return Err(InteractionError { error, partial: Box::new(finish!()) });
        }};
    }

    if question.trim().is_empty() {
        fail!(RunError::EmptyQuestion);
    }
    let mut bundle = PromptBundle::new(question, examples.to_vec(), config.mode);
    let first_prompt = match bundle.first_round() {
        Ok(p) => p,
        Err(e) => fail!(e),
    };
    let no_ir = config.has(Ablation::NoIr);
    let mut feedback: Option<Feedback> = None;
    let mut last_unparsed: Option<Option<String>> = None;

    while !(matches!(feedback, Some(Feedback::Finish)) || state.rounds_used > config.r_max) {
        if no_ir && state.rounds_used >= 1 {
            break;
        }
        let revision = feedback.as_ref().and_then(Feedback::revision);
        let restart_query = revision.map(|r| r.query.clone());
        let user_turn = match revision {
            Some(rev) => {
                bundle.feedback_prefix = Some(rev.prompt.clone());
                match build_feedback_round_prompt(&bundle) {
                    Ok(p) => p,
                    Err(e) => fail!(e),
                }
            }
            None => first_prompt.clone(),
        };
        let messages = conversation.request(&user_turn, &first_prompt);
        let input_words: usize = messages.iter().map(|m| word_count(&m.content)).sum();
        counters.input_words += input_words;
        let generation = match backends.llm.generate(&messages) {
            Ok(g) => g,
            Err(e) => fail!(e),
        };
        let output_words = word_count(&generation);
        counters.output_words += output_words;
        state.rounds_used += 1;
        let round = state.rounds_used;
        conversation.record(&user_turn, &generation);

        let report = parse_coq(&generation);
        let mut log = RoundLog {
            round,
            restart_query: restart_query.clone(),
            input_words,
            output_words,
            parsed: report.chain.is_some(),
            violations: report.violations,
            feedback: None,
        };
        let Some(chain) = report.chain else {
            log::warn!("round {round}: unparseable generation");
            let repeated = last_unparsed.as_ref() == Some(&restart_query);
            let violations = log.violations.clone();
            rounds.push(log);
            if repeated || no_ir {
                fail!(RunError::UnparseableGeneration { round, violations });
            }
            last_unparsed = Some(restart_query);
            continue;
        };
        last_unparsed = None;
        tree.branches.push(Branch { round, chain: chain.clone(), restart_query });

        let next = if no_ir {
            for node in &chain.nodes {
                if let (Some(answer), false) = (&node.answer, node.unsolved) {
                    state.correct_path.record(PathEntry {
                        query: node.query.clone(),
                        answer: answer.clone(),
                        document: Document::new(NO_IR_DOCUMENT_ID, "", "no retrieval"),
                        source: KnowledgeSource::FromLlm,
                    });
                }
            }
            state.last_feedback = Some(Feedback::Finish);
            Feedback::Finish
        } else {
            let result = traverse(&chain, &mut state, |node| {
                ir_step(node, question, backends.retriever, backends.reader, config)
            });
            match result {
                Ok(f) => f,
                Err(e) => {
                    rounds.push(log);
                    fail!(e);
                }
            }
        };
        log.feedback = Some(next.kind());
        rounds.push(log);
        feedback = Some(next);
    }

    Ok(finish!())
}
