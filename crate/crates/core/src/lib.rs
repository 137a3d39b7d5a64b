//! Retrieval-interleaved reasoning engine.
//!
//! A language model plans a whole Chain-of-Query for a question; an IR layer
//! checks each node against the Top-1 retrieved document, corrects confident
//! disagreements and completes queries the model could not answer. Feedback
//! restarts generation from the identified node, growing a Tree-of-Reasoning.
//! The final content is generated from the verified path and marked with
//! references to the supporting documents.
//!
//! Modules:
//! - [`coq`]: chain representation and text format
//! - [`tor`]: the interaction loop
//! - [`verify`]: one IR step (verification and completion)
//! - [`retrieval`], [`reader`], [`llm`]: pluggable backends
//! - [`tracing`]: final content and reference marks
//! - [`metrics`], [`eval`]: scoring and dataset evaluation
//! - [`cli`]: command-line front end

pub mod batch;
pub mod cli;
pub mod convert;
pub mod coq;
pub mod engine;
pub mod eval;
pub mod http;
pub mod llm;
pub mod metrics;
pub mod reader;
pub mod record;
pub mod retrieval;
pub mod testing;
pub mod text;
pub mod tor;
pub mod tracing;
pub mod verify;

pub use coq::{normalize_query, parse_coq, render_coq, ChainOfQuery, CoqNode, ParseReport};
pub use engine::{Engine, QuestionMeta};
pub use record::RunRecord;
pub use retrieval::{Document, LexicalIndex, Retriever};
pub use tor::{run_interaction, Ablation, CorrectPath, KnowledgeSource, RunConfig, TaskMode};
pub use verify::{Feedback, FeedbackKind};
