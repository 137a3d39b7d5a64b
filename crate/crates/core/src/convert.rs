//! Converters from public dataset layouts into the line-record dataset format.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;

use crate::eval::{validate_dataset, DatasetRecord, EvalError};
use crate::record::{read_jsonl, Gold};
use crate::tor::TaskMode;

#[derive(Debug, Deserialize)]
struct HotpotItem {
    #[serde(rename = "_id")]
    id: String,
    question: String,
    answer: String,
    #[serde(default)]
    supporting_facts: Vec<(String, i64)>,
}

/// HotpotQA: a single JSON array; hops are the distinct supporting titles.
pub fn from_hotpotqa(raw: &str) -> Result<Vec<DatasetRecord>, EvalError> {
    let items: Vec<HotpotItem> = serde_json::from_str(raw).map_err(|e| invalid(0, "", &e.to_string()))?;
    let records: Vec<DatasetRecord> = items
        .into_iter()
        .map(|item| {
            let titles: BTreeSet<&str> = item.supporting_facts.iter().map(|(t, _)| t.as_str()).collect();
            DatasetRecord {
                hops: (!titles.is_empty()).then_some(titles.len() as u32),
                id: item.id,
                question: item.question,
                gold: Gold::One(item.answer),
                task_mode: Some(TaskMode::ShortForm),
            }
        })
        .collect();
    validate_dataset(&records)?;
    Ok(records)
}

#[derive(Debug, Deserialize)]
struct KiltItem {
    id: String,
    input: String,
    #[serde(default)]
    output: Vec<KiltOutput>,
}

#[derive(Debug, Deserialize)]
struct KiltOutput {
    answer: Option<String>,
}

/// ELI5 in KILT layout: one JSON object per line, answers under `output`.
pub fn from_eli5_kilt(path: &Path) -> Result<Vec<DatasetRecord>, EvalError> {
    let items: Vec<KiltItem> = read_jsonl(path)?;
    let records: Vec<DatasetRecord> = items
        .into_iter()
        .map(|item| DatasetRecord {
            id: item.id,
            question: item.input,
            gold: Gold::Many(item.output.into_iter().filter_map(|o| o.answer).collect()),
            hops: None,
            task_mode: Some(TaskMode::LongForm),
        })
        .collect();
    validate_dataset(&records)?;
    Ok(records)
}

fn invalid(index: usize, id: &str, reason: &str) -> EvalError {
    EvalError::InvalidRecord { index, id: id.to_owned(), reason: reason.to_owned() }
}
