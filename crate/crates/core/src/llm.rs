//! Prompt assembly and text generation backends.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coq::parse_coq;
use crate::http::{HttpError, JsonClient};
use crate::tor::TaskMode;

/// Environment variable holding the bearer token for the remote chat backend.
pub const API_KEY_ENV: &str = "SEARCHAIN_API_KEY";

pub const SHORT_FORM_INSTRUCTION: &str = "Construct a global reasoning chain for this complex [Question]. \
Plan every step needed to reach the final answer. For each step write a query for the search engine \
starting with [Query k]: and, if you know the answer, write it starting with [Answer k]:. \
If you do not know the answer to a query, write [Unsolved Query] in place of the answer and stop. \
When the chain is complete, write the answer to the [Question] starting with [Final Answer]:.";

pub const LONG_FORM_INSTRUCTION: &str = "Construct a global reasoning chain for this complex [Question]. \
Plan every step needed to explain the answer. For each step write a query for the search engine \
starting with [Query k]: and, if you know the answer, write it starting with [Answer k]:. \
If you do not know the answer to a query, write [Unsolved Query] in place of the answer and stop. \
When the chain is complete, write a detailed, free-form answer to the [Question] starting with [Final Answer]:.";

pub const CONTINUE_INSTRUCTION: &str = "Construct a new global reasoning chain that starts from this query \
and its answer as [Query 1] and [Answer 1], and continue until the [Final Answer].";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error(transparent)]
    BackendUnavailable(#[from] HttpError),
    #[error("script exhausted after {0} generations")]
    ScriptExhausted(usize),
    #[error("few-shot example {index} is not a valid chain: {reason}")]
    MalformedExample { index: usize, reason: String },
    #[error("feedback round prompt requires a feedback prefix")]
    MissingFeedback,
    #[error("{path}:{line}: {reason}")]
    FileFormat { path: String, line: usize, reason: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

pub trait ChatBackend: Send {
    fn generate(&mut self, messages: &[Message]) -> Result<String, LlmError>;
}

/// Single-message convenience wrapper.
pub fn generate(backend: &mut dyn ChatBackend, prompt: &str) -> Result<String, LlmError> {
    backend.generate(&[Message::user(prompt)])
}

/// Replays canned generations in order; running past the end is an error.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    script: Vec<String>,
    cursor: usize,
}

/// One line of a script file. Records without an id are shared by every question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub content: String,
}

impl ScriptedBackend {
    pub fn new<I, S>(script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { script: script.into_iter().map(Into::into).collect(), cursor: 0 }
    }

    /// Generations for question `id`: its own records, or the id-less records
    /// when `id` is `None`.
    pub fn for_question(records: &[ScriptRecord], id: Option<&str>) -> Self {
        Self::new(
            records
                .iter()
                .filter(|r| r.id.as_deref() == id)
                .map(|r| r.content.clone()),
        )
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.script.len() - self.cursor
    }
}

impl ChatBackend for ScriptedBackend {
    fn generate(&mut self, _messages: &[Message]) -> Result<String, LlmError> {
        let out = self
            .script
            .get(self.cursor)
            .cloned()
            .ok_or(LlmError::ScriptExhausted(self.script.len()))?;
        self.cursor += 1;
        Ok(out)
    }
}

pub fn load_script(path: &Path) -> Result<Vec<ScriptRecord>, LlmError> {
    read_jsonl(path)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, LlmError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| LlmError::Io { path: display.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LlmError::Io { path: display.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| LlmError::FileFormat {
            path: display.clone(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    messages: &'a [Message],
    temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    content: String,
}

/// Client for a chat service speaking `{messages, temperature}` → `{content}`.
#[derive(Debug, Clone)]
pub struct RemoteChat {
    client: JsonClient,
    model: Option<String>,
    temperature: f64,
}

impl RemoteChat {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self { client: JsonClient::new(endpoint, timeout), model: None, temperature: 0.0 }
    }

    /// Reads the bearer token from [`API_KEY_ENV`] when set.
    pub fn with_env_credential(mut self) -> Self {
        self.client = self.client.with_bearer(std::env::var(API_KEY_ENV).ok());
        self
    }

    pub fn with_model(mut self, model: Option<String>) -> Self {
        self.model = model;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }
}

impl ChatBackend for RemoteChat {
    fn generate(&mut self, messages: &[Message]) -> Result<String, LlmError> {
        let response: ChatResponse = self.client.post(&ChatRequest {
            model: self.model.as_deref(),
            messages,
            temperature: self.temperature,
        })?;
        Ok(response.content)
    }
}

/// Dataset families with their default number of in-context examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    HotpotQa,
    Musique,
    WikiMultiHopQa,
    StrategyQa,
    Zsre,
    TRex,
    Fever,
    Eli5,
}

impl Task {
    /// Example counts used with retrieval interaction; without retrieval
    /// StrategyQA uses six.
    pub fn default_shots(self, with_retrieval: bool) -> usize {
        match self {
            Task::Fever => 4,
            Task::StrategyQa if !with_retrieval => 6,
            _ => 2,
        }
    }

    pub fn mode(self) -> TaskMode {
        match self {
            Task::Eli5 => TaskMode::LongForm,
            _ => TaskMode::ShortForm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub question: String,
    pub coq: String,
}

pub fn load_examples(path: &Path) -> Result<Vec<FewShotExample>, LlmError> {
    read_jsonl(path)
}

pub fn instruction_for(mode: TaskMode) -> &'static str {
    match mode {
        TaskMode::ShortForm => SHORT_FORM_INSTRUCTION,
        TaskMode::LongForm => LONG_FORM_INSTRUCTION,
    }
}

fn validate_examples(examples: &[FewShotExample]) -> Result<(), LlmError> {
    for (index, example) in examples.iter().enumerate() {
        let report = parse_coq(&example.coq);
        if report.chain.is_none() {
            let reason = report
                .violations
                .iter()
                .filter(|v| v.fatal)
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return Err(LlmError::MalformedExample { index, reason });
        }
    }
    Ok(())
}

fn render_prompt(instruction: &str, examples: &[FewShotExample], question: &str) -> String {
    let mut blocks = Vec::with_capacity(examples.len() + 2);
    blocks.push(instruction.to_owned());
    for example in examples {
        blocks.push(format!("[Question]: {}\n{}", example.question, example.coq));
    }
    blocks.push(format!("[Question]: {question}"));
    blocks.join("\n\n")
}

/// Instruction, then one block per example, then the question.
pub fn build_first_round_prompt(
    question: &str,
    examples: &[FewShotExample],
    mode: TaskMode,
) -> Result<String, LlmError> {
    validate_examples(examples)?;
    Ok(render_prompt(instruction_for(mode), examples, question))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_instruction: String,
    pub few_shot_examples: Vec<FewShotExample>,
    pub question: String,
    pub feedback_prefix: Option<String>,
}

impl PromptBundle {
    pub fn new(question: impl Into<String>, examples: Vec<FewShotExample>, mode: TaskMode) -> Self {
        Self {
            system_instruction: instruction_for(mode).to_owned(),
            few_shot_examples: examples,
            question: question.into(),
            feedback_prefix: None,
        }
    }

    pub fn first_round(&self) -> Result<String, LlmError> {
        validate_examples(&self.few_shot_examples)?;
        Ok(render_prompt(&self.system_instruction, &self.few_shot_examples, &self.question))
    }
}

/// Feedback template on the first line, then the continuation instruction.
/// Prior turns travel as conversation history, see [`Conversation`].
pub fn build_feedback_round_prompt(bundle: &PromptBundle) -> Result<String, LlmError> {
    let prefix = bundle.feedback_prefix.as_deref().ok_or(LlmError::MissingFeedback)?;
    Ok(format!("{prefix}\n{CONTINUE_INSTRUCTION}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryMode {
    /// Every request carries all prior prompts and generations of the run.
    #[default]
    MultiTurn,
    /// Each request stands alone; feedback rounds restate the first-round prompt.
    SingleTurn,
}

/// Message history of one run.
#[derive(Debug, Clone, Default)]
pub struct Conversation {
    mode: HistoryMode,
    history: Vec<Message>,
}

impl Conversation {
    pub fn new(mode: HistoryMode) -> Self {
        Self { mode, history: Vec::new() }
    }

    /// Messages to send for a new user turn.
    pub fn request(&self, user_turn: &str, first_round_prompt: &str) -> Vec<Message> {
        match self.mode {
            HistoryMode::MultiTurn => {
                let mut messages = self.history.clone();
                messages.push(Message::user(user_turn));
                messages
            }
            HistoryMode::SingleTurn if user_turn == first_round_prompt => vec![Message::user(user_turn)],
            HistoryMode::SingleTurn => {
                vec![Message::user(format!("{user_turn}\n\n{first_round_prompt}"))]
            }
        }
    }

    pub fn record(&mut self, user_turn: &str, reply: &str) {
        self.history.push(Message::user(user_turn));
        self.history.push(Message::assistant(reply));
    }

    pub fn history(&self) -> &[Message] {
        &self.history
    }
}
