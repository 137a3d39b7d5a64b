//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convert;
use crate::engine::{Engine, QuestionMeta};
use crate::eval::{self, report_from_traces, DatasetRecord, EvalSetup, ReportLine};
use crate::llm::{self, ChatBackend, FewShotExample, HistoryMode, RemoteChat, ScriptRecord, ScriptedBackend, Task};
use crate::reader::{LexicalReader, Reader, RemoteReader};
use crate::record::{read_jsonl, write_jsonl, RunRecord};
use crate::retrieval::{load_corpus, LexicalIndex, RemoteRetriever, Retriever};
use crate::tor::{Ablation, RunConfig, TaskMode, Timing};
use crate::tracing::{render, Layout};

const DEMO_SHORT_EXAMPLES: &str = include_str!("../data/examples_short.jsonl");
const DEMO_LONG_EXAMPLES: &str = include_str!("../data/examples_long.jsonl");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Retrieval(#[from] crate::retrieval::RetrievalError),
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LlmChoice {
    #[default]
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReaderChoice {
    #[default]
    Baseline,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RetrieverChoice {
    #[default]
    Local,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetFormat {
    Hotpotqa,
    Eli5Kilt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Short,
    Long,
}

impl From<ModeArg> for TaskMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Short => TaskMode::ShortForm,
            ModeArg::Long => TaskMode::LongForm,
        }
    }
}

/// Everything needed to build backends and run questions. Loadable from TOML;
/// command-line flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub r_max: usize,
    pub theta: f64,
    pub alpha: f64,
    pub mode: TaskMode,
    pub history: HistoryMode,
    pub reference_max_chars: Option<usize>,
    pub timing: Timing,
    pub llm: LlmChoice,
    pub reader: ReaderChoice,
    pub retriever: RetrieverChoice,
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub script: Option<PathBuf>,
    pub examples_short: Option<PathBuf>,
    pub examples_long: Option<PathBuf>,
    pub task: Option<Task>,
    pub shots: Option<usize>,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub reader_endpoint: Option<String>,
    pub retriever_endpoint: Option<String>,
    pub timeout_seconds: u64,
    pub parallel: usize,
    pub out: PathBuf,
    pub layout: Layout,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            r_max: run.r_max,
            theta: run.theta,
            alpha: run.alpha,
            mode: run.mode,
            history: run.history,
            reference_max_chars: None,
            timing: Timing::Wall,
            llm: LlmChoice::Scripted,
            reader: ReaderChoice::Baseline,
            retriever: RetrieverChoice::Local,
            corpus: None,
            index: None,
            script: None,
            examples_short: None,
            examples_long: None,
            task: None,
            shots: None,
            llm_endpoint: None,
            llm_model: None,
            reader_endpoint: None,
            retriever_endpoint: None,
            timeout_seconds: 60,
            parallel: 1,
            out: PathBuf::from("searchain-out"),
            layout: Layout::Inline,
        }
    }
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let need = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(CliError::Config(msg.into())) };
        need(self.r_max >= 1, "r_max must be positive")?;
        need((0.0..=1.0).contains(&self.alpha), "alpha must lie in [0, 1]")?;
        need(self.theta.is_finite(), "theta must be finite")?;
        need(self.parallel >= 1, "parallel must be at least 1")?;
        need(self.llm != LlmChoice::Remote || self.llm_endpoint.is_some(), "remote llm requires llm_endpoint")?;
        need(self.llm != LlmChoice::Scripted || self.script.is_some(), "scripted llm requires a script file")?;
        need(
            self.reader != ReaderChoice::Remote || self.reader_endpoint.is_some(),
            "remote reader requires reader_endpoint",
        )?;
        need(
            self.retriever != RetrieverChoice::Remote || self.retriever_endpoint.is_some(),
            "remote retriever requires retriever_endpoint",
        )?;
        need(
            self.retriever != RetrieverChoice::Local || self.corpus.is_some() || self.index.is_some(),
            "local retriever requires a corpus or index file",
        )?;
        Ok(())
    }

    pub fn run_config(&self, ablations: &[Ablation]) -> RunConfig {
        RunConfig {
            r_max: self.r_max,
            theta: self.theta,
            alpha: self.alpha,
            mode: self.mode,
            ablations: ablations.iter().copied().collect(),
            history: self.history,
            reference_max_chars: self.reference_max_chars,
            timing: self.timing,
        }
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_seconds)
    }

    pub fn build_retriever(&self) -> Result<Box<dyn Retriever>, CliError> {
        match self.retriever {
            RetrieverChoice::Remote => Ok(Box::new(RemoteRetriever::new(
                self.retriever_endpoint.clone().unwrap_or_default(),
                self.timeout(),
            ))),
            RetrieverChoice::Local => match (&self.index, &self.corpus) {
                (Some(index), _) => Ok(Box::new(LexicalIndex::load(index)?)),
                (None, Some(corpus)) => Ok(Box::new(LexicalIndex::build(load_corpus(corpus)?)?)),
                (None, None) => Err(CliError::Config("local retriever requires a corpus or index file".into())),
            },
        }
    }

    pub fn build_reader(&self) -> Box<dyn Reader> {
        match self.reader {
            ReaderChoice::Baseline => Box::new(LexicalReader),
            ReaderChoice::Remote => {
                Box::new(RemoteReader::new(self.reader_endpoint.clone().unwrap_or_default(), self.timeout()))
            }
        }
    }

    fn task_for(&self, mode: TaskMode) -> Task {
        match (self.task, mode) {
            (Some(task), _) if task.mode() == mode => task,
            (_, TaskMode::ShortForm) => Task::HotpotQa,
            (_, TaskMode::LongForm) => Task::Eli5,
        }
    }

    /// Few-shot examples for a mode, trimmed to the configured count.
    pub fn examples(&self, mode: TaskMode) -> Result<Vec<FewShotExample>, CliError> {
        let (path, demo) = match mode {
            TaskMode::ShortForm => (&self.examples_short, DEMO_SHORT_EXAMPLES),
            TaskMode::LongForm => (&self.examples_long, DEMO_LONG_EXAMPLES),
        };
        let mut examples = match path {
            Some(p) => llm::load_examples(p)?,
            None => demo
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<Result<Vec<FewShotExample>, _>>()
                .map_err(|e| CliError::Config(format!("built-in examples: {e}")))?,
        };
        let wanted = self.shots.unwrap_or_else(|| self.task_for(mode).default_shots(true));
        if examples.len() < wanted {
            return Err(CliError::Config(format!(
                "{} few-shot examples configured but only {} available",
                wanted,
                examples.len()
            )));
        }
        examples.truncate(wanted);
        Ok(examples)
    }

    fn script_records(&self) -> Result<Vec<ScriptRecord>, CliError> {
        match (&self.llm, &self.script) {
            (LlmChoice::Scripted, Some(path)) => Ok(llm::load_script(path)?),
            _ => Ok(Vec::new()),
        }
    }

    fn make_llm(&self, records: &[ScriptRecord], id: Option<&str>) -> Box<dyn ChatBackend> {
        match self.llm {
            LlmChoice::Scripted => Box::new(ScriptedBackend::for_question(records, id)),
            LlmChoice::Remote => Box::new(
                RemoteChat::new(self.llm_endpoint.clone().unwrap_or_default(), self.timeout())
                    .with_model(self.llm_model.clone())
                    .with_env_credential(),
            ),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "searchain", version, about = "Chain-of-Query reasoning with retrieval verification and traced references")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one question and write its trace.
    Ask {
        question: String,
        /// Script records to replay (matches records with this id; default: records without id).
        #[arg(long)]
        id: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a dataset file.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a dataset with one or more components disabled.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Recompute the report and summary from a trace file.
    Recompute {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value = "searchain")]
        label: String,
    },
    /// Convert a public dataset file into the line-record dataset format.
    Convert {
        #[arg(long, value_enum)]
        format: DatasetFormat,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a lexical index from a corpus and save it.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub rmax: Option<usize>,
    #[arg(long)]
    pub no_verification: bool,
    #[arg(long)]
    pub no_completion: bool,
    #[arg(long)]
    pub no_ir: bool,
    #[arg(long)]
    pub parallel: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub llm: Option<LlmChoice>,
    #[arg(long, value_enum)]
    pub reader: Option<ReaderChoice>,
    #[arg(long, value_enum)]
    pub retriever: Option<RetrieverChoice>,
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub examples: Option<PathBuf>,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub llm_endpoint: Option<String>,
    #[arg(long)]
    pub reader_endpoint: Option<String>,
    #[arg(long)]
    pub retriever_endpoint: Option<String>,
    /// Send each request without prior conversation turns.
    #[arg(long)]
    pub single_turn: bool,
    /// Record zero wall time so traces are byte-reproducible.
    #[arg(long)]
    pub no_timing: bool,
    /// Print unmarked content with a reference list instead of inline marks.
    #[arg(long)]
    pub endnotes: bool,
}

impl CommonArgs {
    pub fn ablations(&self) -> Vec<Ablation> {
        let mut out = Vec::new();
        if self.no_verification {
            out.push(Ablation::NoVerification);
        }
        if self.no_completion {
            out.push(Ablation::NoCompletion);
        }
        if self.no_ir {
            out.push(Ablation::NoIr);
        }
        out
    }

    pub fn resolve(&self) -> Result<EngineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => EngineConfig::load(path)?,
            None => EngineConfig::default(),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone().into();
                }
            };
        }
        set!(corpus);
        set!(index);
        set!(theta);
        set!(alpha);
        set!(parallel);
        set!(out);
        set!(llm);
        set!(reader);
        set!(retriever);
        set!(script);
        set!(shots);
        set!(llm_endpoint);
        set!(reader_endpoint);
        set!(retriever_endpoint);
        if let Some(mode) = self.mode {
            cfg.mode = mode.into();
        }
        if let Some(r) = self.rmax {
            cfg.r_max = r;
        }
        if let Some(examples) = &self.examples {
            match cfg.mode {
                TaskMode::ShortForm => cfg.examples_short = Some(examples.clone()),
                TaskMode::LongForm => cfg.examples_long = Some(examples.clone()),
            }
        }
        if self.single_turn {
            cfg.history = HistoryMode::SingleTurn;
        }
        if self.no_timing {
            cfg.timing = Timing::Disabled;
        }
        if self.endnotes {
            cfg.layout = Layout::Endnotes;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Human-readable label for an ablation set.
pub fn ablation_label(ablations: &[Ablation]) -> String {
    if ablations.is_empty() {
        return "searchain".into();
    }
    let parts: Vec<&str> = ablations
        .iter()
        .map(|a| match a {
            Ablation::NoVerification => "w/o verification",
            Ablation::NoCompletion => "w/o completion",
            Ablation::NoIr => "w/o ir",
        })
        .collect();
    format!("searchain {}", parts.join(", "))
}

pub fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Ask { question, id, common } => cmd_ask(&question, id.as_deref(), &common),
        Command::Eval { common } => cmd_eval(&common, false),
        Command::Ablate { common } => cmd_eval(&common, true),
        Command::Recompute { traces, label } => cmd_recompute(&traces, &label),
        Command::Convert { format, input, out } => {
            let records = match format {
                DatasetFormat::Hotpotqa => convert::from_hotpotqa(&fs::read_to_string(&input).map_err(io_err(&input))?)?,
                DatasetFormat::Eli5Kilt => convert::from_eli5_kilt(&input)?,
            };
            write_jsonl(&out, &records).map_err(io_err(&out))?;
            eprintln!("wrote {} records to {}", records.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Index { corpus, out } => {
            let index = LexicalIndex::build(load_corpus(&corpus)?)?;
            index.save(&out)?;
            eprintln!("indexed {} documents, {} terms", index.documents().len(), index.vocabulary_size());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Prints to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<(), CliError> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io { path: "<stdout>".into(), source: e }),
        _ => Ok(()),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn cmd_ask(question: &str, id: Option<&str>, common: &CommonArgs) -> Result<ExitCode, CliError> {
    let cfg = common.resolve()?;
    let ablations = common.ablations();
    let run_config = cfg.run_config(&ablations);
    let retriever = cfg.build_retriever()?;
    let reader = cfg.build_reader();
    let examples = cfg.examples(run_config.mode)?;
    let records = cfg.script_records()?;
    let mut llm = cfg.make_llm(&records, id);

    let engine = Engine { retriever: retriever.as_ref(), reader: reader.as_ref(), examples: &examples, config: &run_config };
    let meta = QuestionMeta { id: id.map(str::to_owned), ..QuestionMeta::default() };
    let run = engine.solve(question, meta, llm.as_mut());

    ensure_dir(&cfg.out)?;
    let trace_path = cfg.out.join("trace.jsonl");
    write_jsonl(&trace_path, std::slice::from_ref(&run)).map_err(io_err(&trace_path))?;

    if let Some(content) = &run.final_content {
        emit(&render(content, cfg.layout))?;
    }
    if run.correct_path.is_empty() {
        eprintln!("note: correct path is empty; no supporting documents were recorded");
    }
    match &run.error {
        Some(e) => {
            eprintln!("error: {e}");
            Ok(ExitCode::FAILURE)
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

pub fn cmd_eval(common: &CommonArgs, require_ablation: bool) -> Result<ExitCode, CliError> {
    let ablations = common.ablations();
    if require_ablation && ablations.is_empty() {
        return Err(CliError::Config(
            "ablate needs at least one of --no-verification, --no-completion, --no-ir".into(),
        ));
    }
    let cfg = common.resolve()?;
    let dataset_path = common
        .dataset
        .as_ref()
        .ok_or_else(|| CliError::Config("--dataset is required".into()))?;
    let records: Vec<DatasetRecord> = eval::load_dataset(dataset_path)?;
    let run_config = cfg.run_config(&ablations);
    let retriever = cfg.build_retriever()?;
    let reader = cfg.build_reader();
    let needs = |mode| records.iter().any(|r| r.task_mode.unwrap_or(run_config.mode) == mode);
    let short_examples = if needs(TaskMode::ShortForm) { cfg.examples(TaskMode::ShortForm)? } else { Vec::new() };
    let long_examples = if needs(TaskMode::LongForm) { cfg.examples(TaskMode::LongForm)? } else { Vec::new() };
    let scripts = cfg.script_records()?;

    let setup = EvalSetup {
        retriever: retriever.as_ref(),
        reader: reader.as_ref(),
        short_examples: &short_examples,
        long_examples: &long_examples,
        config: &run_config,
        parallel: cfg.parallel,
    };
    let runs = eval::evaluate(&setup, &records, |record| cfg.make_llm(&scripts, Some(&record.id)));
    let label = ablation_label(&ablations);
    let (reports, summary) = report_from_traces(&label, &runs);

    ensure_dir(&cfg.out)?;
    let trace_path = cfg.out.join("traces.jsonl");
    write_jsonl(&trace_path, &runs).map_err(io_err(&trace_path))?;
    let report_path = cfg.out.join("report.jsonl");
    let mut lines: Vec<ReportLine> = reports.into_iter().map(ReportLine::Question).collect();
    lines.push(ReportLine::Summary(summary.clone()));
    write_jsonl(&report_path, &lines).map_err(io_err(&report_path))?;

    emit(&serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    if summary.failures > 0 {
        eprintln!("{} of {} questions failed; see {}", summary.failures, summary.dataset_size, trace_path.display());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_recompute(traces: &Path, label: &str) -> Result<ExitCode, CliError> {
    let runs: Vec<RunRecord> = read_jsonl(traces).map_err(io_err(traces))?;
    let (_, summary) = report_from_traces(label, &runs);
    emit(&serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    Ok(ExitCode::SUCCESS)
}
