mod common;

use std::process::Command;
use std::time::Duration;

use common::MockServer;
use searchain::llm::{ChatBackend, LlmError, Message, RemoteChat, API_KEY_ENV};
use searchain::reader::{Reader, ReaderError, RemoteReader};
use searchain::retrieval::{Document, RemoteRetriever, RetrievalError, Retriever};
use serde_json::{json, Value};

const TIMEOUT: Duration = Duration::from_secs(5);

fn body(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap()
}

#[test]
fn retriever_wire_contract() {
    let server = MockServer::start(vec![
        (200, json!({"documents": [{"id": "d1", "title": "Jaws", "text": "Jaws text", "score": 3.2}]}).to_string()),
        (200, json!({"documents": []}).to_string()),
        (200, json!({"documents": [{"id": "a", "text": "x"}, {"id": "b", "text": "y"}]}).to_string()),
        (503, "{}".into()),
    ]);
    let retriever = RemoteRetriever::new(server.url.clone(), TIMEOUT);
    let doc = retriever.retrieve_top1("Who directed Jaws?").unwrap();
    assert_eq!(doc, Document::new("d1", "Jaws", "Jaws text"));
    assert!(matches!(retriever.retrieve_top1("nothing"), Err(RetrievalError::NoMatch(q)) if q == "nothing"));
    assert!(matches!(retriever.retrieve_top1("two"), Err(RetrievalError::WrongDocumentCount(2))));
    assert!(matches!(retriever.retrieve_top1("down"), Err(RetrievalError::Backend(_))));
    let seen = server.join();
    assert_eq!(body(&seen[0].1), json!({"query": "Who directed Jaws?", "k": 1}));
}

#[test]
fn reader_wire_contract() {
    let doc = Document::new("d1", "", "Jaws was directed by Steven Spielberg.");
    let server = MockServer::start(vec![
        (200, json!({"answer": "Steven Spielberg", "confidence": 7.5, "start": 21, "end": 37}).to_string()),
        (200, json!({"answer": "Steven Spielberg", "confidence": 7.5, "start": 30, "end": 99}).to_string()),
    ]);
    let reader = RemoteReader::new(server.url.clone(), TIMEOUT);
    let out = reader.read("Who directed Jaws?", &doc).unwrap();
    assert_eq!((out.answer.as_str(), out.confidence, out.span_start, out.span_end), ("Steven Spielberg", 7.5, 21, 37));
    assert!(matches!(reader.read("Who directed Jaws?", &doc), Err(ReaderError::InvalidSpan { .. })));
    let seen = server.join();
    assert_eq!(
        body(&seen[0].1),
        json!({"query": "Who directed Jaws?", "document_text": "Jaws was directed by Steven Spielberg."})
    );
}

#[test]
fn chat_wire_contract_and_unreachable_service() {
    let server = MockServer::start(vec![(200, json!({"content": "[Query 1]: q\n[Answer 1]: a"}).to_string())]);
    let mut chat = RemoteChat::new(server.url.clone(), TIMEOUT).with_model(Some("demo-model".into()));
    let reply = chat.generate(&[Message::user("hello"), Message::assistant("hi"), Message::user("go")]).unwrap();
    assert_eq!(reply, "[Query 1]: q\n[Answer 1]: a");
    let seen = server.join();
    assert_eq!(
        body(&seen[0].1),
        json!({
            "model": "demo-model",
            "messages": [
                {"role": "user", "content": "hello"},
                {"role": "assistant", "content": "hi"},
                {"role": "user", "content": "go"}
            ],
            "temperature": 0.0
        })
    );
    assert!(!seen[0].0.to_ascii_lowercase().contains("authorization"));

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let dead = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let mut chat = RemoteChat::new(dead, Duration::from_millis(500));
    assert!(matches!(chat.generate(&[Message::user("x")]), Err(LlmError::BackendUnavailable(_))));
}

#[test]
fn cli_ask_against_remote_backends() {
    let retriever = MockServer::start(vec![(
        200,
        json!({"documents": [{"id": "jaws", "title": "Jaws", "text": "Jaws is a thriller film directed by Steven Spielberg."}]})
            .to_string(),
    )]);
    let reader = MockServer::start(vec![(
        200,
        json!({"answer": "Steven Spielberg", "confidence": 4.0, "start": 36, "end": 52}).to_string(),
    )]);
    let llm = MockServer::start(vec![
        (200, json!({"content": "[Query 1]: Who directed Jaws?\n[Answer 1]: Steven Spielberg\n[Final Answer]: Steven Spielberg"}).to_string()),
        (200, json!({"content": "[Final Content]: Jaws was directed by Steven Spielberg."}).to_string()),
    ]);
    let out_dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_searchain"))
        .args(["ask", "Who directed Jaws?", "--llm", "remote", "--reader", "remote", "--retriever", "remote"])
        .args(["--llm-endpoint", &llm.url, "--reader-endpoint", &reader.url, "--retriever-endpoint", &retriever.url])
        .arg("--out")
        .arg(out_dir.path())
        .env(API_KEY_ENV, "secret-token")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("Jaws was directed by Steven Spielberg[1]."));

    let chat_requests = llm.join();
    assert_eq!(chat_requests.len(), 2);
    assert!(chat_requests[0].0.to_ascii_lowercase().contains("authorization: bearer secret-token"));
    let tracing_turn = body(&chat_requests[1].1);
    let messages = tracing_turn["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 3, "multi-turn history carries the first exchange");
    assert!(messages[2]["content"].as_str().unwrap().starts_with("You can try to generate the final answer"));
    assert_eq!(retriever.join().len(), 1);
    assert_eq!(reader.join().len(), 1);
}
