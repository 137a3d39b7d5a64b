mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::data;
use searchain::eval::Summary;
use searchain::record::{read_jsonl, RunRecord};
use searchain::tor::{KnowledgeSource, TaskMode};
use searchain::verify::FeedbackKind;

const JAWS_ALIEN: &str = "Who was born first, the director of Jaws or the director of Alien?";

fn searchain(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_searchain"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn demo_args<'a>(cmd: &'a str, corpus: &'a str, script: &'a str) -> Vec<&'a str> {
    vec![cmd, "--corpus", corpus, "--script", script, "--no-timing"]
}

fn path_str(name: &str) -> String {
    data(name).to_string_lossy().into_owned()
}

#[test]
fn ask_matches_golden_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, script) = (path_str("corpus.jsonl"), path_str("demo_script.jsonl"));
    let mut args = demo_args("ask", &corpus, &script);
    args.insert(1, JAWS_ALIEN);
    let out = searchain(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/ask_trace.jsonl")).unwrap();
    assert_eq!(got, golden);

    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("Jaws was directed by Steven Spielberg[1], who was born on December 18, 1946[2]."));
    assert!(stdout.contains("[3] alien (Who directed Alien?)"));
}

#[test]
fn remote_without_endpoint_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = path_str("corpus.jsonl");
    let out = searchain(&["ask", "Q?", "--corpus", &corpus, "--llm", "remote"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("llm_endpoint"));
    assert!(!dir.path().join("trace.jsonl").exists());
}

#[test]
fn degenerate_corpus_yields_empty_path() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    fs::write(&corpus, "{\"id\":\"x\",\"text\":\"Nothing relevant lives here.\"}\n").unwrap();
    let script = dir.path().join("script.jsonl");
    fs::write(
        &script,
        "{\"content\":\"[Query 1]: Who directed Jaws?\\n[Answer 1]: Steven Spielberg\\n[Final Answer]: Steven Spielberg\"}\n",
    )
    .unwrap();
    let out = searchain(
        &["ask", "Who directed Jaws?", "--corpus", corpus.to_str().unwrap(), "--script", script.to_str().unwrap()],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("correct path is empty"));
    let runs: Vec<RunRecord> = read_jsonl(&dir.path().join("trace.jsonl")).unwrap();
    assert!(runs[0].correct_path.is_empty());
    assert_eq!(runs[0].feedback_sequence, vec![FeedbackKind::Finish]);
    assert_eq!(runs[0].prediction, "Steven Spielberg");
}

#[test]
fn backend_failure_exits_nonzero_with_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.jsonl");
    fs::write(&script, "{\"content\":\"[Query 1]: Who directed Alien?\\n[Unsolved Query]\"}\n").unwrap();
    let corpus = path_str("corpus.jsonl");
    let out = searchain(&["ask", "Q?", "--corpus", &corpus, "--script", script.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let runs: Vec<RunRecord> = read_jsonl(&dir.path().join("trace.jsonl")).unwrap();
    assert_eq!(runs[0].tree.branches.len(), 1);
    assert!(runs[0].error.as_deref().unwrap().contains("exhausted"));
}

fn eval(extra: &[&str]) -> (Summary, Vec<RunRecord>) {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, script, dataset) =
        (path_str("corpus.jsonl"), path_str("demo_script.jsonl"), path_str("demo_dataset.jsonl"));
    let mut args = demo_args(extra[0], &corpus, &script);
    args.extend(["--dataset", &dataset]);
    args.extend(&extra[1..]);
    let out = searchain(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = serde_json::from_slice(&out.stdout).unwrap();
    (summary, read_jsonl(&dir.path().join("traces.jsonl")).unwrap())
}

#[test]
fn eval_demo_cover_em_two_thirds() {
    let (summary, runs) = eval(&["eval", "--parallel", "3"]);
    assert_eq!(summary.per_mode.len(), 1);
    assert_eq!(summary.per_mode[0].mean, 2.0 / 3.0);
    assert_eq!(summary.dataset_size, 3);
    let ids: Vec<_> = runs.iter().map(|r| r.id.as_deref().unwrap()).collect();
    assert_eq!(ids, ["q1", "q2", "q3"]);
}

#[test]
fn parallel_and_sequential_eval_agree() {
    let (a, ra) = eval(&["eval", "--parallel", "1"]);
    let (b, rb) = eval(&["eval", "--parallel", "4"]);
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn ablate_no_ir_generates_once_per_question() {
    let (summary, runs) = eval(&["ablate", "--no-ir"]);
    assert_eq!(summary.label, "searchain w/o ir");
    for run in &runs {
        assert_eq!(run.counters.rounds, 1);
        assert_eq!(run.ir_calls, 0);
        assert!(run.final_content.as_ref().unwrap().references.iter().all(|r| r.document_id == "no-ir"));
    }
}

#[test]
fn ablate_no_verification_keeps_llm_answer() {
    let (_, runs) = eval(&["ablate", "--no-verification"]);
    let q1 = &runs[0];
    let entry = q1.correct_path.entries.iter().find(|e| e.query == "When was Steven Spielberg born?").unwrap();
    assert_eq!(entry.answer, "1952");
    assert_eq!(entry.source, KnowledgeSource::FromLlm);
    assert!(q1.correct_path.entries.iter().all(|e| e.source != KnowledgeSource::CorrectedByIr));
}

#[test]
fn ablate_no_completion_excludes_unsolved() {
    let (_, runs) = eval(&["ablate", "--no-completion"]);
    assert!(runs[0].correct_path.entries.iter().all(|e| e.query != "Who directed Alien?"));
}

#[test]
fn ablate_requires_a_flag() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = path_str("demo_dataset.jsonl");
    let out = searchain(&["ablate", "--dataset", &dataset], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_dataset_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("empty.jsonl");
    fs::write(&dataset, "").unwrap();
    let (corpus, script) = (path_str("corpus.jsonl"), path_str("demo_script.jsonl"));
    let out = searchain(
        &["eval", "--dataset", dataset.to_str().unwrap(), "--corpus", &corpus, "--script", &script],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn mixed_mode_dataset_reports_each_mode() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("mixed.jsonl");
    fs::write(
        &dataset,
        concat!(
            "{\"id\":\"s\",\"question\":\"Who directed Jaws?\",\"gold\":\"Steven Spielberg\",\"task_mode\":\"short-form\"}\n",
            "{\"id\":\"l\",\"question\":\"Who was Steven Spielberg?\",\"gold\":\"Steven Spielberg was born on December 18, 1946 in Cincinnati.\",\"task_mode\":\"long-form\"}\n",
        ),
    )
    .unwrap();
    let script = dir.path().join("script.jsonl");
    fs::write(
        &script,
        concat!(
            "{\"id\":\"s\",\"content\":\"[Query 1]: Who directed Jaws?\\n[Answer 1]: Steven Spielberg\"}\n",
            "{\"id\":\"s\",\"content\":\"Jaws was directed by Steven Spielberg.\"}\n",
            "{\"id\":\"l\",\"content\":\"[Query 1]: When was Steven Spielberg born?\\n[Answer 1]: Steven Spielberg was born on December 18, 1946 in Cincinnati.\"}\n",
            "{\"id\":\"l\",\"content\":\"[Final Content]: Steven Spielberg was born on December 18, 1946 in Cincinnati.\"}\n",
        ),
    )
    .unwrap();
    let corpus = path_str("corpus.jsonl");
    let out = searchain(
        &["eval", "--dataset", dataset.to_str().unwrap(), "--corpus", &corpus, "--script", script.to_str().unwrap()],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Summary = serde_json::from_slice(&out.stdout).unwrap();
    let modes: Vec<_> = summary.per_mode.iter().map(|m| (m.mode, m.metric.as_str(), m.mean)).collect();
    assert_eq!(modes, [(TaskMode::ShortForm, "cover_em", 1.0), (TaskMode::LongForm, "rouge_l", 1.0)]);
}

#[test]
fn index_then_ask_with_saved_index() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("index.json");
    let built = Command::new(env!("CARGO_BIN_EXE_searchain"))
        .args(["index", "--corpus", &path_str("corpus.jsonl"), "--out", index.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(built.status.success());
    let script = path_str("demo_script.jsonl");
    let out = searchain(&["ask", JAWS_ALIEN, "--index", index.to_str().unwrap(), "--script", &script, "--no-timing"], dir.path());
    assert!(out.status.success());
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/ask_trace.jsonl")).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("trace.jsonl")).unwrap(), golden);
}

#[test]
fn toml_config_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "r_max = 1\ncorpus = {:?}\nscript = {:?}\ntiming = \"disabled\"\n",
            path_str("corpus.jsonl"),
            path_str("demo_script.jsonl")
        ),
    )
    .unwrap();
    let out = searchain(&["ask", JAWS_ALIEN, "--config", config.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let runs: Vec<RunRecord> = read_jsonl(&dir.path().join("trace.jsonl")).unwrap();
    assert_eq!(runs[0].config.r_max, 1);
    assert_eq!(runs[0].counters.rounds, 2);
    assert_eq!(runs[0].feedback_sequence, vec![FeedbackKind::Correct, FeedbackKind::Complete]);
}
