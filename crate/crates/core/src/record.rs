//! Trace export: one JSON object per run, one run per line.
//!
//! A trace line carries everything needed to recompute the run's metrics:
//! the tree with restart points, the correct path with document ids, the
//! feedback sequence, the counters, the config and the final content.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::QuestionMeta;
use crate::metrics::EfficiencyCounters;
use crate::tor::{CorrectPath, Interaction, NodeEvent, RoundLog, RunConfig, TreeOfReasoning};
use crate::tracing::FinalContent;
use crate::verify::FeedbackKind;

/// A gold answer or a list of accepted aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    One(String),
    Many(Vec<String>),
}

impl Gold {
    pub fn aliases(&self) -> Vec<&str> {
        match self {
            Gold::One(g) => vec![g.as_str()],
            Gold::Many(gs) => gs.iter().map(String::as_str).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.aliases().iter().all(|g| g.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: Option<String>,
    pub question: String,
    pub gold: Option<Gold>,
    pub hops: Option<u32>,
    pub config: RunConfig,
    pub tree: TreeOfReasoning,
    pub rounds: Vec<RoundLog>,
    pub feedback_sequence: Vec<FeedbackKind>,
    pub events: Vec<NodeEvent>,
    pub ir_calls: usize,
    pub correct_path: CorrectPath,
    pub counters: EfficiencyCounters,
    pub final_content: Option<FinalContent>,
    pub prediction: String,
    pub error: Option<String>,
}

impl RunRecord {
    pub(crate) fn new(
        question: &str,
        meta: QuestionMeta,
        config: &RunConfig,
        interaction: Interaction,
        final_content: Option<FinalContent>,
        prediction: String,
        error: Option<String>,
    ) -> Self {
        let feedback_sequence = interaction.feedback_sequence();
        Self {
            id: meta.id,
            question: question.to_owned(),
            gold: meta.gold,
            hops: meta.hops,
            config: config.clone(),
            tree: interaction.tree,
            rounds: interaction.rounds,
            feedback_sequence,
            events: interaction.events,
            ir_calls: interaction.ir_calls,
            correct_path: interaction.path,
            counters: interaction.counters,
            final_content,
            prediction,
            error,
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> std::io::Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}
