//! Wire-level tests of the remote backend against a canned in-process HTTP
//! server: request shape (payload, headers, credential), happy paths for all
//! four operations, retry-then-recover, and fail-closed degradation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};
use veridex::{
    BackendError, ClaimNode, Document, EvidenceBackend, RelationKind, RemoteBackend, RemoteConfig,
};

/// One captured request: path, Authorization header, and the JSON body.
#[derive(Debug)]
struct Recorded {
    path: String,
    authorization: Option<String>,
    body: Value,
}

/// Serves a fixed script of `(status, body)` responses, one connection per
/// request, recording everything it was sent.
struct CannedServer {
    endpoint: String,
    requests: Arc<Mutex<Vec<Recorded>>>,
    handle: Option<JoinHandle<()>>,
}

impl CannedServer {
    fn start(script: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let endpoint = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&requests);
        let handle = std::thread::spawn(move || {
            for (status, body) in script {
                let Ok((mut stream, _)) = listener.accept() else {
                    return;
                };
                let request = read_http_request(&mut stream);
                seen.lock().unwrap().push(request);
                let response = format!(
                    "HTTP/1.1 {status} canned\r\nContent-Type: application/json\r\n\
                     Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len(),
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        Self {
            endpoint,
            requests,
            handle: Some(handle),
        }
    }

    /// Waits for the script to finish and returns everything recorded.
    fn finish(mut self) -> Vec<Recorded> {
        self.handle.take().unwrap().join().expect("server thread");
        Arc::try_unwrap(self.requests)
            .expect("server done")
            .into_inner()
            .unwrap()
    }
}

fn read_http_request(stream: &mut std::net::TcpStream) -> Recorded {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk).expect("read");
        assert!(n > 0, "peer closed mid-request");
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
    };
    let head = String::from_utf8_lossy(&buf[..header_end]).into_owned();
    let mut lines = head.lines();
    let request_line = lines.next().unwrap_or_default();
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();

    let mut authorization = None;
    let mut content_length = 0usize;
    for line in lines {
        let Some((name, value)) = line.split_once(':') else {
            continue;
        };
        match name.to_ascii_lowercase().as_str() {
            "authorization" => authorization = Some(value.trim().to_string()),
            "content-length" => content_length = value.trim().parse().unwrap_or(0),
            _ => {}
        }
    }
    while buf.len() < header_end + content_length {
        let n = stream.read(&mut chunk).expect("read body");
        assert!(n > 0, "peer closed mid-body");
        buf.extend_from_slice(&chunk[..n]);
    }
    let body = serde_json::from_slice(&buf[header_end..header_end + content_length])
        .unwrap_or(Value::Null);
    Recorded {
        path,
        authorization,
        body,
    }
}

/// Chat-completions envelope around an assistant message.
fn chat(content: &str) -> String {
    json!({"choices": [{"message": {"content": content}}]}).to_string()
}

fn backend(endpoint: &str, retries: u32, fail_closed: bool) -> RemoteBackend {
    let config = RemoteConfig {
        retries,
        fail_closed,
        ..RemoteConfig::new(endpoint)
    };
    RemoteBackend::new(config, 0.6).expect("backend should build")
}

fn node(id: &str, text: &str) -> ClaimNode {
    ClaimNode {
        id: id.into(),
        canonical_text: text.into(),
        members: vec![id.into()],
        sources: BTreeSet::from(["d0".to_string()]),
        entities: BTreeSet::new(),
        logit: 0.0,
        embedding: None,
        resolved_pairs: BTreeMap::new(),
    }
}

#[test]
fn extraction_round_trip_sends_credential_and_pinned_temperature() {
    let server = CannedServer::start(vec![(
        200,
        chat(r#"[{"text": "Mercury is the closest planet to the Sun.", "entities": ["Mercury", "the  SUN"]}]"#),
    )]);

    // The credential reaches the wire from the named environment variable
    // and from nowhere else.
    std::env::set_var("VERIDEX_HTTP_TEST_KEY", "sk-canned-123");
    let config = RemoteConfig {
        api_key_env: Some("VERIDEX_HTTP_TEST_KEY".into()),
        ..RemoteConfig::new(&server.endpoint)
    };
    let backend = RemoteBackend::new(config, 0.6).unwrap();

    let claims = backend
        .extract_claims(&Document::new("d7", "Mercury orbits closest to the Sun."))
        .unwrap();
    assert_eq!(claims.len(), 1);
    assert_eq!(claims[0].id, "d7#00");
    assert_eq!(claims[0].text, "Mercury is the closest planet to the Sun.");
    assert_eq!(claims[0].source_doc, "d7");
    assert!(claims[0].entities.contains("mercury"), "{:?}", claims[0].entities);
    assert!(claims[0].entities.contains("the sun"), "{:?}", claims[0].entities);
    assert!(claims[0].embedding.is_none());

    let requests = server.finish();
    assert_eq!(requests.len(), 1);
    let req = &requests[0];
    assert_eq!(req.path, "/chat/completions");
    assert_eq!(req.authorization.as_deref(), Some("Bearer sk-canned-123"));
    assert_eq!(req.body["temperature"], json!(0.0));
    assert_eq!(req.body["model"], json!("default"));
    let prompt = req.body["messages"][0]["content"].as_str().unwrap();
    assert!(prompt.contains("Mercury orbits closest to the Sun."));
    assert!(prompt.contains("Document d7"));
}

#[test]
fn embeddings_are_renormalized_and_batched() {
    let server = CannedServer::start(vec![(
        200,
        json!({"data": [
            {"embedding": [3.0, 4.0]},
            {"embedding": [0.0, -2.0]},
        ]})
        .to_string(),
    )]);
    let backend = backend(&server.endpoint, 0, true);

    let vectors = backend
        .embed(&["alpha".to_string(), "beta".to_string()])
        .unwrap();
    assert_eq!(vectors, vec![vec![0.6, 0.8], vec![0.0, -1.0]]);

    let requests = server.finish();
    assert_eq!(requests[0].path, "/embeddings");
    assert_eq!(requests[0].body["input"], json!(["alpha", "beta"]));
    // No credential configured: the header must be absent, not empty.
    assert_eq!(requests[0].authorization, None);
}

#[test]
fn embedding_count_mismatch_is_malformed() {
    // Two identical short responses: the first attempt and one retry.
    let bad = json!({"data": [{"embedding": [1.0, 0.0]}]}).to_string();
    let server = CannedServer::start(vec![(200, bad.clone()), (200, bad)]);
    let backend = backend(&server.endpoint, 1, true);

    // Embedding has no fail-closed degradation: the error propagates.
    let err = backend
        .embed(&["one".to_string(), "two".to_string()])
        .unwrap_err();
    match err {
        BackendError::Malformed { attempts, detail } => {
            assert_eq!(attempts, 2);
            assert!(detail.contains("asked for 2"), "{detail}");
        }
        other => panic!("expected Malformed, got {other:?}"),
    }
    assert_eq!(server.finish().len(), 2);
}

#[test]
fn relation_verdict_is_symmetric_under_argument_order() {
    let reply = chat(r#"{"relation": "Support", "confidence": 0.84}"#);
    let server = CannedServer::start(vec![(200, reply.clone()), (200, reply)]);
    let backend = backend(&server.endpoint, 0, true);

    let zebra = node("n1", "zebras are striped");
    let apple = node("n2", "apples are fruit");
    let first = backend.verify_relation(&zebra, &apple).unwrap();
    let second = backend.verify_relation(&apple, &zebra).unwrap();
    assert_eq!(first.relation, RelationKind::Support);
    assert_eq!(first.confidence, 0.84);
    assert_eq!(first, second);

    // Both prompts present the lexicographically smaller text first.
    for req in server.finish() {
        let prompt = req.body["messages"][0]["content"].as_str().unwrap();
        assert!(prompt.contains("Statement 1: apples are fruit"), "{prompt}");
        assert!(prompt.contains("Statement 2: zebras are striped"), "{prompt}");
    }
}

#[test]
fn arbitration_maps_letters_to_canonical_ids_and_renders_context() {
    let server = CannedServer::start(vec![(
        200,
        chat(r#"```json
{"winner": "B", "confidence": 0.9}
```"#),
    )]);
    let backend = backend(&server.endpoint, 0, true);

    let a = node("n_low", "first claim");
    let b = node("n_high", "second claim");
    let ctx_node = node("n_ctx", "supporting detail");
    // Arguments deliberately reversed: ids are canonicalized before
    // prompting, so "A" is always the lower id.
    let verdict = backend.arbitrate(&b, &a, &[&ctx_node]).unwrap();
    assert_eq!(verdict.winner, "n_low");
    assert_eq!(verdict.loser, "n_high");
    assert!(verdict.is_decisive());
    assert_eq!(verdict.confidence, 0.9);

    let requests = server.finish();
    let prompt = requests[0].body["messages"][0]["content"].as_str().unwrap();
    assert!(prompt.contains("Claim A: second claim"), "{prompt}");
    assert!(prompt.contains("Claim B: first claim"), "{prompt}");
    assert!(prompt.contains("1. supporting detail"), "{prompt}");
}

#[test]
fn malformed_reply_retries_then_recovers() {
    let server = CannedServer::start(vec![
        (200, chat("the claims support each other")), // not JSON
        (200, chat(r#"{"relation": "contradiction", "confidence": 0.95}"#)),
    ]);
    let backend = backend(&server.endpoint, 2, true);

    let verdict = backend
        .verify_relation(&node("n1", "aaa"), &node("n2", "bbb"))
        .unwrap();
    assert_eq!(verdict.relation, RelationKind::Contradiction);
    assert_eq!(server.finish().len(), 2, "recovery should stop the retries");
}

#[test]
fn exhausted_retries_fail_closed_to_neutral_and_abstention() {
    let garbage = chat(r#"{"relation": "perpendicular", "confidence": 2}"#);
    let server = CannedServer::start(vec![
        (200, garbage.clone()),
        (200, garbage),
        (500, "{}".to_string()),
        (500, "{}".to_string()),
    ]);
    let backend = backend(&server.endpoint, 1, true);

    // Two malformed relation replies -> neutral, no edge.
    let verdict = backend
        .verify_relation(&node("n1", "aaa"), &node("n2", "bbb"))
        .unwrap();
    assert_eq!(verdict, veridex::RelationVerdict::NEUTRAL);

    // Two transport failures on arbitration -> abstention, no update.
    let verdict = backend
        .arbitrate(&node("n1", "aaa"), &node("n2", "bbb"), &[])
        .unwrap();
    assert!(!verdict.is_decisive());
    assert_eq!(verdict.confidence, 0.0);

    assert_eq!(server.finish().len(), 4, "every attempt should hit the wire");
}

#[test]
fn fail_open_propagates_the_classified_error() {
    let server = CannedServer::start(vec![
        (200, chat("no json here")),
        (200, chat("still no json")),
    ]);
    let backend = backend(&server.endpoint, 1, false);

    let err = backend
        .verify_relation(&node("n1", "aaa"), &node("n2", "bbb"))
        .unwrap_err();
    match err {
        BackendError::Malformed { attempts, .. } => assert_eq!(attempts, 2),
        other => panic!("expected Malformed, got {other:?}"),
    }
    server.finish();
}

#[test]
fn extraction_has_no_fallback_and_reports_transport_errors() {
    let server = CannedServer::start(vec![
        (503, r#"{"error": "overloaded"}"#.to_string()),
        (503, r#"{"error": "overloaded"}"#.to_string()),
    ]);
    let backend = backend(&server.endpoint, 1, true);

    let err = backend
        .extract_claims(&Document::new("d1", "text"))
        .unwrap_err();
    match err {
        BackendError::Transport(detail) => {
            assert!(detail.contains("503"), "{detail}");
        }
        other => panic!("expected Transport, got {other:?}"),
    }
    server.finish();
}
