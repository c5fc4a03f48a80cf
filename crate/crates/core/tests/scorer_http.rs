//! The chat-completion backend against a local stub server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use guidedrec::aspects::{generic_catalog, render_item_prompt};
use guidedrec::corpus::ItemRecord;
use guidedrec::scorer::{
    render_score_block, score_item, BackendError, HttpChatConfig, ScoreCache, ScoreError,
    ScorerBackend, ScoringOptions,
};
use serde_json::{json, Value};

/// Serves the scripted `(status, body)` responses in order, one connection
/// each, and records every request body.
fn stub(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Value>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    if name.eq_ignore_ascii_case("content-length") {
                        length = value.trim().parse().unwrap();
                    }
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock()
                .unwrap()
                .push(serde_json::from_slice(&buf).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn completion(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn config(url: String) -> HttpChatConfig {
    HttpChatConfig {
        backoff_ms: 1,
        ..HttpChatConfig::new(url, "stub-model")
    }
}

#[test]
fn retries_transient_errors_and_format_failures() {
    let catalog = generic_catalog(3).unwrap();
    let names: Vec<&str> = catalog.names().collect();
    let good = render_score_block(names.iter().copied(), &[2.0, 5.0, 9.0]);
    let (url, seen, handle) = stub(vec![
        (503, "{}".into()),
        (200, completion("I'd rather not say.")),
        (200, completion(&good)),
    ]);
    let backend = ScorerBackend::http_chat(config(url)).unwrap();
    let item = ItemRecord::new("i1", "Item one");
    let scored = score_item(
        &backend,
        &item,
        &catalog,
        &ScoreCache::new(),
        &ScoringOptions::default(),
    )
    .unwrap();
    handle.join().unwrap();

    assert_eq!(scored.scores, vec![2.0, 5.0, 9.0]);
    // the 503 retry happens inside one logical request
    assert_eq!(backend.request_count(), 2);
    let bodies = seen.lock().unwrap();
    assert_eq!(bodies.len(), 3);
    let prompt = render_item_prompt(&item, &catalog);
    assert_eq!(bodies[0]["model"], "stub-model");
    assert_eq!(bodies[0]["messages"][0]["content"], prompt.system);
    assert_eq!(bodies[0]["messages"][1]["content"], prompt.user);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen, handle) = stub(vec![(400, "{\"error\":\"bad\"}".into())]);
    let backend = ScorerBackend::http_chat(config(url)).unwrap();
    let catalog = generic_catalog(2).unwrap();
    let err = score_item(
        &backend,
        &ItemRecord::new("i", "I"),
        &catalog,
        &ScoreCache::new(),
        &ScoringOptions::default(),
    )
    .unwrap_err();
    handle.join().unwrap();
    assert!(matches!(err, ScoreError::Backend(BackendError::Fatal(_))));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn persistent_format_failures_exhaust_retries() {
    let options = ScoringOptions {
        format_retries: 1,
        ..ScoringOptions::default()
    };
    let (url, _, handle) = stub(vec![
        (200, completion("nothing useful")),
        (200, completion("still nothing")),
    ]);
    let backend = ScorerBackend::http_chat(config(url)).unwrap();
    let catalog = generic_catalog(2).unwrap();
    let err = score_item(
        &backend,
        &ItemRecord::new("i", "I"),
        &catalog,
        &ScoreCache::new(),
        &options,
    )
    .unwrap_err();
    handle.join().unwrap();
    match err {
        ScoreError::Unscorable {
            attempts, report, ..
        } => {
            assert_eq!(attempts, 2);
            assert_eq!(report.missing_aspects.len(), 2);
        }
        other => panic!("unexpected {other:?}"),
    }
}
