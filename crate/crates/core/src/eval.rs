//! Dataset evaluation: run every question, score it, aggregate.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch;
use crate::engine::{Engine, QuestionMeta};
use crate::llm::{ChatBackend, FewShotExample};
use crate::metrics::{
    cover_em_any, reasoning_steps, rouge_l_max, source_distribution, EfficiencyCounters, SourceDistribution,
};
use crate::reader::Reader;
use crate::record::{read_jsonl, Gold, RunRecord};
use crate::retrieval::Retriever;
use crate::tor::{KnowledgeSource, RunConfig, TaskMode};
use crate::tracing::skc;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub gold: Gold,
    #[serde(default)]
    pub hops: Option<u32>,
    /// Falls back to the run configuration's mode when absent.
    #[serde(default)]
    pub task_mode: Option<TaskMode>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset record {index} ({id:?}): {reason}")]
    InvalidRecord { index: usize, id: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, EvalError> {
    let records: Vec<DatasetRecord> = read_jsonl(path)?;
    validate_dataset(&records)?;
    Ok(records)
}

pub fn validate_dataset(records: &[DatasetRecord]) -> Result<(), EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    for (index, r) in records.iter().enumerate() {
        let invalid = |reason: &str| EvalError::InvalidRecord { index, id: r.id.clone(), reason: reason.into() };
        if r.question.trim().is_empty() {
            return Err(invalid("empty question"));
        }
        if r.gold.is_empty() {
            return Err(invalid("empty gold answer"));
        }
        if r.hops == Some(0) {
            return Err(invalid("hops must be positive"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceCounts {
    pub from_llm: usize,
    pub corrected: usize,
    pub completed: usize,
}

impl SourceCounts {
    pub fn total(&self) -> usize {
        self.from_llm + self.corrected + self.completed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionReport {
    pub id: Option<String>,
    pub question: String,
    pub task_mode: TaskMode,
    pub prediction: String,
    pub gold: Option<Gold>,
    pub cover_em: Option<u8>,
    pub rouge_l: Option<f64>,
    pub counters: EfficiencyCounters,
    pub reasoning_steps: usize,
    pub skc: usize,
    pub source_counts: SourceCounts,
    pub source_distribution: Option<SourceDistribution>,
    pub hops: Option<u32>,
    pub error: Option<String>,
}

impl QuestionReport {
    /// cover-EM for short-form questions, ROUGE-L for long-form ones.
    pub fn score(&self) -> Option<f64> {
        match self.task_mode {
            TaskMode::ShortForm => self.cover_em.map(f64::from),
            TaskMode::LongForm => self.rouge_l,
        }
    }
}

/// Scores one run from its trace record alone.
pub fn score_run(run: &RunRecord) -> QuestionReport {
    let mode = run.config.mode;
    let aliases = run.gold.as_ref().map(Gold::aliases);
    let (cover_em, rouge_l) = match (&aliases, mode) {
        (Some(g), TaskMode::ShortForm) => (Some(cover_em_any(&run.prediction, g)), None),
        (Some(g), TaskMode::LongForm) => (None, Some(rouge_l_max(&run.prediction, g))),
        (None, _) => (None, None),
    };
    let mut counts = SourceCounts::default();
    for entry in &run.correct_path.entries {
        match entry.source {
            KnowledgeSource::FromLlm => counts.from_llm += 1,
            KnowledgeSource::CorrectedByIr => counts.corrected += 1,
            KnowledgeSource::CompletedByIr => counts.completed += 1,
        }
    }
    QuestionReport {
        id: run.id.clone(),
        question: run.question.clone(),
        task_mode: mode,
        prediction: run.prediction.clone(),
        gold: run.gold.clone(),
        cover_em,
        rouge_l,
        counters: run.counters,
        reasoning_steps: reasoning_steps(&run.tree),
        skc: run.final_content.as_ref().map(skc).unwrap_or(0),
        source_counts: counts,
        source_distribution: source_distribution(&run.correct_path).ok(),
        hops: run.hops,
        error: run.error.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAggregate {
    pub mode: TaskMode,
    pub metric: String,
    pub questions: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopAggregate {
    pub hops: u32,
    pub questions: usize,
    pub mean_score: f64,
    pub mean_reasoning_steps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanCounters {
    pub input_words: f64,
    pub output_words: f64,
    pub rounds: f64,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub dataset_size: usize,
    pub failures: usize,
    pub per_mode: Vec<ModeAggregate>,
    pub mean_counters: MeanCounters,
    /// Pooled over every correct-path node of every question.
    pub source_distribution: Option<SourceDistribution>,
    pub mean_skc: f64,
    pub mean_reasoning_steps: f64,
    /// Only present when the dataset carries hop annotations.
    pub per_hop: Vec<HopAggregate>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn summarize(label: &str, reports: &[QuestionReport]) -> Summary {
    let mut per_mode = Vec::new();
    for mode in [TaskMode::ShortForm, TaskMode::LongForm] {
        let scored: Vec<f64> = reports.iter().filter(|r| r.task_mode == mode).filter_map(QuestionReport::score).collect();
        if scored.is_empty() {
            continue;
        }
        per_mode.push(ModeAggregate {
            mode,
            metric: match mode {
                TaskMode::ShortForm => "cover_em".into(),
                TaskMode::LongForm => "rouge_l".into(),
            },
            questions: scored.len(),
            mean: mean(scored.into_iter()),
        });
    }

    let pooled = reports.iter().fold(SourceCounts::default(), |acc, r| SourceCounts {
        from_llm: acc.from_llm + r.source_counts.from_llm,
        corrected: acc.corrected + r.source_counts.corrected,
        completed: acc.completed + r.source_counts.completed,
    });
    let source_distribution = (pooled.total() > 0).then(|| {
        let total = pooled.total() as f64;
        SourceDistribution {
            from_llm: pooled.from_llm as f64 / total,
            corrected: pooled.corrected as f64 / total,
            completed: pooled.completed as f64 / total,
        }
    });

    let mut by_hops: BTreeMap<u32, Vec<&QuestionReport>> = BTreeMap::new();
    for r in reports {
        if let Some(h) = r.hops {
            by_hops.entry(h).or_default().push(r);
        }
    }
    let per_hop = by_hops
        .into_iter()
        .map(|(hops, rs)| HopAggregate {
            hops,
            questions: rs.len(),
            mean_score: mean(rs.iter().filter_map(|r| r.score())),
            mean_reasoning_steps: mean(rs.iter().map(|r| r.reasoning_steps as f64)),
        })
        .collect();

    Summary {
        label: label.to_owned(),
        dataset_size: reports.len(),
        failures: reports.iter().filter(|r| r.error.is_some()).count(),
        per_mode,
        mean_counters: MeanCounters {
            input_words: mean(reports.iter().map(|r| r.counters.input_words as f64)),
            output_words: mean(reports.iter().map(|r| r.counters.output_words as f64)),
            rounds: mean(reports.iter().map(|r| r.counters.rounds as f64)),
            wall_time_seconds: mean(reports.iter().map(|r| r.counters.wall_time_seconds)),
        },
        source_distribution,
        mean_skc: mean(reports.iter().map(|r| r.skc as f64)),
        mean_reasoning_steps: mean(reports.iter().map(|r| r.reasoning_steps as f64)),
        per_hop,
    }
}

/// One line of the evaluation report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum ReportLine {
    Question(QuestionReport),
    Summary(Summary),
}

/// Shared inputs for evaluating a dataset.
#[derive(Clone, Copy)]
pub struct EvalSetup<'a> {
    pub retriever: &'a dyn Retriever,
    pub reader: &'a dyn Reader,
    pub short_examples: &'a [FewShotExample],
    pub long_examples: &'a [FewShotExample],
    pub config: &'a RunConfig,
    /// Maximum number of questions processed concurrently.
    pub parallel: usize,
}

/// Runs every question, each with its own model backend, and returns the
/// trace records in dataset order.
pub fn evaluate<F>(setup: &EvalSetup<'_>, records: &[DatasetRecord], make_llm: F) -> Vec<RunRecord>
where
    F: Fn(&DatasetRecord) -> Box<dyn ChatBackend> + Sync + Send,
{
    let run_one = |record: &DatasetRecord| {
        let mut config = setup.config.clone();
        if let Some(mode) = record.task_mode {
            config.mode = mode;
        }
        let examples = match config.mode {
            TaskMode::ShortForm => setup.short_examples,
            TaskMode::LongForm => setup.long_examples,
        };
        let engine = Engine { retriever: setup.retriever, reader: setup.reader, examples, config: &config };
        let meta = QuestionMeta { id: Some(record.id.clone()), gold: Some(record.gold.clone()), hops: record.hops };
        let mut llm = make_llm(record);
        engine.solve(&record.question, meta, llm.as_mut())
    };
    batch::map_parallel(records, setup.parallel, run_one)
}

/// Recomputes per-question reports and the summary from trace records.
pub fn report_from_traces(label: &str, runs: &[RunRecord]) -> (Vec<QuestionReport>, Summary) {
    let reports: Vec<QuestionReport> = runs.iter().map(score_run).collect();
    let summary = summarize(label, &reports);
    (reports, summary)
}
