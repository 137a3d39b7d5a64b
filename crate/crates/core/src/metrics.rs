//! Evaluation metrics and run statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;
use crate::tor::{CorrectPath, KnowledgeSource, TreeOfReasoning};

/// Cost of one run: words sent (`n`), words received (`m`), chain
/// generations (`r`) and wall time in seconds (`t`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EfficiencyCounters {
    pub input_words: usize,
    pub output_words: usize,
    pub rounds: usize,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SourceDistribution {
    pub from_llm: f64,
    pub corrected: f64,
    pub completed: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("correct path is empty")]
    EmptyPath,
}

/// 1 when the normalized gold answer is contained in the normalized prediction.
pub fn cover_em(generated: &str, gold: &str) -> u8 {
    let gold = text::normalize(gold);
    u8::from(!gold.is_empty() && text::normalize(generated).contains(&gold))
}

/// 1 when any gold alias is covered.
pub fn cover_em_any<S: AsRef<str>>(generated: &str, golds: &[S]) -> u8 {
    u8::from(golds.iter().any(|g| cover_em(generated, g.as_ref()) == 1))
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { above.max(row[j]) };
            diag = above;
        }
    }
    row[b.len()]
}

/// ROUGE-L F1 over pre-tokenized sequences.
pub fn rouge_l_tokens<T: PartialEq>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let precision = lcs as f64 / candidate.len() as f64;
    let recall = lcs as f64 / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// ROUGE-L F1 over whitespace tokens of the normalized strings.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    rouge_l_tokens(&text::normalized_tokens(candidate), &text::normalized_tokens(reference))
}

/// Best ROUGE-L over several references.
pub fn rouge_l_max<S: AsRef<str>>(candidate: &str, references: &[S]) -> f64 {
    references.iter().map(|r| rouge_l(candidate, r.as_ref())).fold(0.0, f64::max)
}

pub fn source_distribution(path: &CorrectPath) -> Result<SourceDistribution, MetricsError> {
    if path.is_empty() {
        return Err(MetricsError::EmptyPath);
    }
    let total = path.len() as f64;
    let count = |source| path.entries.iter().filter(|e| e.source == source).count() as f64 / total;
    Ok(SourceDistribution {
        from_llm: count(KnowledgeSource::FromLlm),
        corrected: count(KnowledgeSource::CorrectedByIr),
        completed: count(KnowledgeSource::CompletedByIr),
    })
}

/// Chain nodes generated across all branches; restarts add steps.
pub fn reasoning_steps(tree: &TreeOfReasoning) -> usize {
    tree.branches.iter().map(|b| b.chain.nodes.len()).sum()
}
