//! End-to-end answering of one question: interaction loop, then tracing.

use std::time::Instant;

use crate::llm::{ChatBackend, FewShotExample, HistoryMode, Message};
use crate::reader::Reader;
use crate::record::RunRecord;
use crate::retrieval::Retriever;
use crate::text::word_count;
use crate::tor::{run_interaction, Ablation, Backends, Interaction, RunConfig, Timing};
use crate::tracing::{attach_references, build_tracing_prompt, strip_final_content_marker, FinalContent};

/// Question metadata carried into the trace.
#[derive(Debug, Clone, Default)]
pub struct QuestionMeta {
    pub id: Option<String>,
    pub gold: Option<crate::record::Gold>,
    pub hops: Option<u32>,
}

/// Shared, read-only parts of a run.
#[derive(Clone, Copy)]
pub struct Engine<'a> {
    pub retriever: &'a dyn Retriever,
    pub reader: &'a dyn Reader,
    pub examples: &'a [FewShotExample],
    pub config: &'a RunConfig,
}

impl Engine<'_> {
    /// Runs one question to completion. Failures are recorded on the returned
    /// record together with everything produced before them.
    pub fn solve(&self, question: &str, meta: QuestionMeta, llm: &mut dyn ChatBackend) -> RunRecord {
        let backends = Backends { llm: &mut *llm, retriever: self.retriever, reader: self.reader };
        let (mut interaction, mut error) = match run_interaction(question, self.examples, backends, self.config) {
            Ok(run) => (run, None),
            Err(e) => (*e.partial, Some(e.error.to_string())),
        };

        let fallback = fallback_answer(&interaction);
        let mut final_content = None;
        if error.is_none() {
            let started = Instant::now();
            let traced = if self.config.has(Ablation::NoIr) || interaction.path.is_empty() {
                Ok(fallback.clone())
            } else {
                self.trace(question, &mut interaction, llm)
            };
            if self.config.timing == Timing::Wall {
                interaction.counters.wall_time_seconds += started.elapsed().as_secs_f64();
            }
            match traced {
                Ok(text) => final_content = Some(attach_references(&text, &interaction.path)),
                Err(e) => error = Some(e),
            }
        }
        if interaction.path.is_empty() && error.is_none() {
            log::info!("no supporting documents recorded for {question:?}");
        }

        let prediction = match &final_content {
            Some(FinalContent { source_text, .. }) if !source_text.trim().is_empty() => source_text.clone(),
            _ => fallback,
        };
        RunRecord::new(question, meta, self.config, interaction, final_content, prediction, error)
    }

    fn trace(
        &self,
        question: &str,
        interaction: &mut Interaction,
        llm: &mut dyn ChatBackend,
    ) -> Result<String, String> {
        let prompt = build_tracing_prompt(&interaction.path).map_err(|e| e.to_string())?;
        let messages = match self.config.history {
            HistoryMode::MultiTurn => {
                let mut m = interaction.conversation.clone();
                m.push(Message::user(prompt.clone()));
                m
            }
            HistoryMode::SingleTurn => vec![Message::user(format!("{prompt}\n\n[Question]: {question}"))],
        };
        interaction.counters.input_words += messages.iter().map(|m| word_count(&m.content)).sum::<usize>();
        let generation = llm.generate(&messages).map_err(|e| format!("tracing: {e}"))?;
        interaction.counters.output_words += word_count(&generation);
        interaction.conversation.push(Message::user(prompt));
        interaction.conversation.push(Message::assistant(generation.clone()));
        Ok(strip_final_content_marker(&generation).to_owned())
    }
}

/// The last branch's final answer, else its last answered node.
fn fallback_answer(interaction: &Interaction) -> String {
    let Some(branch) = interaction.tree.branches.last() else { return String::new() };
    branch
        .chain
        .final_answer
        .clone()
        .or_else(|| branch.chain.nodes.iter().rev().find_map(|n| n.answer.clone()))
        .unwrap_or_default()
}
