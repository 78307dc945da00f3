use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};
use vreason_core::controller::{EmbeddingProvider, HttpEmbedding, EMBED_DIM};
use vreason_core::llm::{ChatConfig, HttpChatBackend, LlmBackend};
use vreason_core::perception::{HttpToolkitConfig, HttpToolkitProvider, PerceptionToolkit};
use vreason_core::state::BoundingBox;
use vreason_core::Error;

type Handler = dyn Fn(&Value) -> (u16, String) + Send + Sync;

struct Request {
    headers: Vec<String>,
    body: Value,
}

/// Minimal one-request-per-connection HTTP server on a random port.
struct Stub {
    url: String,
    seen: Arc<Mutex<Vec<Request>>>,
}

impl Stub {
    fn start(handler: impl Fn(&Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let handler: Arc<Handler> = Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut headers = Vec::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let line = line.trim_end().to_string();
                    if line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    headers.push(line);
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                let body: Value = serde_json::from_slice(&buf).unwrap_or(Value::Null);
                let (status, reply) = handler(&body);
                log.lock().unwrap().push(Request { headers, body });
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        Stub { url, seen }
    }

    fn requests(&self) -> usize {
        self.seen.lock().unwrap().len()
    }
}

fn toolkit_reply(body: &Value) -> (u16, String) {
    let value = match body["skill"].as_str().unwrap() {
        "image_size" => json!([640, 480]),
        "find" => json!([[10, 20, 110, 220], [300, 40, 400, 140]]),
        "exists" => json!(true),
        "verify_property" => json!(body["args"]["attribute"] == "red"),
        "caption" => json!("a red bus"),
        "simple_query" => json!(format!("answer to {}", body["args"]["question"].as_str().unwrap_or(""))),
        "compute_depth" => json!(3.5),
        "crop" => body["args"]["bbox"].clone(),
        _ => return (200, json!({ "ok": false, "error": "unknown skill" }).to_string()),
    };
    (200, json!({ "ok": true, "value": value }).to_string())
}

#[test]
fn toolkit_round_trips_every_skill() {
    let stub = Stub::start(toolkit_reply);
    let provider = HttpToolkitProvider::new(HttpToolkitConfig::new(&stub.url)).unwrap();
    let tk = provider.open("img/1.jpg").unwrap();
    let root = tk.root_patch();
    assert_eq!(root.bbox, BoundingBox::new(0.0, 0.0, 640.0, 480.0).unwrap());

    let found = tk.find(&root, "Bus").unwrap();
    assert_eq!(found.len(), 2);
    assert_eq!(found[1].name, "bus_2");
    assert_eq!(found[0].bbox, BoundingBox::new(10.0, 20.0, 110.0, 220.0).unwrap());
    assert!(tk.exists(&root, "bus").unwrap());
    assert!(tk.verify_property(&found[0], "bus", "red").unwrap());
    assert!(!tk.verify_property(&found[0], "bus", "blue").unwrap());
    assert_eq!(tk.caption(&root).unwrap(), "a red bus");
    assert_eq!(tk.simple_query(&root, "why?").unwrap(), "answer to why?");
    assert_eq!(tk.compute_depth(&root).unwrap(), 3.5);

    let seen = stub.seen.lock().unwrap();
    let find = seen.iter().find(|r| r.body["skill"] == "find").unwrap();
    assert_eq!(find.body["format_version"], 1);
    assert_eq!(find.body["image"], "img/1.jpg");
    assert_eq!(find.body["image_encoding"], "reference");
    assert_eq!(find.body["args"]["patch"], json!([0.0, 0.0, 640.0, 480.0]));
    let verify = seen.iter().find(|r| r.body["skill"] == "verify_property").unwrap();
    assert_eq!(verify.body["args"]["patch"], json!([10.0, 20.0, 110.0, 220.0]));
}

#[test]
fn toolkit_errors_are_classified() {
    let stub = Stub::start(|body| match body["skill"].as_str().unwrap() {
        "image_size" => (200, json!({ "ok": true, "value": [640, 480] }).to_string()),
        "find" => (200, json!({ "ok": true, "value": "not a list" }).to_string()),
        "exists" => (200, json!({ "ok": false, "error": "model crashed" }).to_string()),
        "caption" => (503, "{}".into()),
        _ => (200, "not json".into()),
    });
    let tk = HttpToolkitProvider::new(HttpToolkitConfig::new(&stub.url)).unwrap().open("a.jpg").unwrap();
    let root = tk.root_patch();
    assert!(matches!(tk.find(&root, "bus"), Err(Error::ToolkitProtocol(_))));
    assert!(matches!(tk.exists(&root, "bus"), Err(Error::ToolkitUnavailable(m)) if m.contains("model crashed")));
    assert!(matches!(tk.caption(&root), Err(Error::ToolkitUnavailable(_))));
    assert!(matches!(tk.compute_depth(&root), Err(Error::ToolkitProtocol(_))));
}

#[test]
fn toolkit_unreachable_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let provider = HttpToolkitProvider::new(HttpToolkitConfig::new(format!("http://127.0.0.1:{port}/"))).unwrap();
    assert!(matches!(provider.open("a.jpg"), Err(Error::ToolkitUnavailable(_))));
}

#[test]
fn chat_backend_sends_prompt_and_key() {
    let stub = Stub::start(|body| {
        let prompt = body["messages"][0]["content"].as_str().unwrap().to_uppercase();
        (200, json!({ "choices": [{ "message": { "role": "assistant", "content": prompt } }] }).to_string())
    });
    let mut cfg = ChatConfig::new(&stub.url, "m1");
    cfg.api_key = Some("secret".into());
    cfg.temperature = 0.2;
    let b = HttpChatBackend::new(cfg).unwrap();
    assert_eq!(b.complete("hello").unwrap(), "HELLO");
    assert_eq!(b.identity(), "chat:m1");
    let seen = stub.seen.lock().unwrap();
    assert_eq!(seen[0].body["model"], "m1");
    assert_eq!(seen[0].body["temperature"], 0.2);
    assert!(seen[0].headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer secret")));
}

#[test]
fn chat_backend_retries_server_errors_only() {
    let calls = Arc::new(Mutex::new(0));
    let c = calls.clone();
    let stub = Stub::start(move |_| {
        let mut n = c.lock().unwrap();
        *n += 1;
        if *n < 3 {
            (500, "{}".into())
        } else {
            (200, json!({ "choices": [{ "message": { "content": "ok" } }] }).to_string())
        }
    });
    let b = HttpChatBackend::new(ChatConfig::new(&stub.url, "m")).unwrap();
    assert_eq!(b.complete("x").unwrap(), "ok");
    assert_eq!(stub.requests(), 3);

    let stub = Stub::start(|_| (400, "{}".into()));
    let b = HttpChatBackend::new(ChatConfig::new(&stub.url, "m")).unwrap();
    assert!(matches!(b.complete("x"), Err(Error::BackendUnavailable(_))));
    assert_eq!(stub.requests(), 1);
}

#[test]
fn embedding_client_checks_dimension() {
    let stub = Stub::start(|body| {
        let n = if body["input"] == "short" { 3 } else { EMBED_DIM };
        (200, json!({ "data": [{ "embedding": vec![0.5; n] }] }).to_string())
    });
    let e = HttpEmbedding::new(&stub.url, "emb", None, 5.0, 0).unwrap();
    assert_eq!(e.embed("state").unwrap().len(), EMBED_DIM);
    assert!(matches!(e.embed("short"), Err(Error::Shape { expected: EMBED_DIM, actual: 3 })));
}
