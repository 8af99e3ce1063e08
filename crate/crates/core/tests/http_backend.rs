use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use harmony_core::llm::HttpBackend;
use harmony_core::{BackendError, CompletionBackend, CompletionRequest, Stage};
use serde_json::{json, Value};

fn request() -> CompletionRequest {
    CompletionRequest {
        stage: Stage::Decide,
        system_text: "You are a home assistant.".into(),
        user_text: "User said: \"lights\"".into(),
        max_tokens: 64,
        temperature: 0.0,
    }
}

fn read_request(stream: &mut TcpStream) -> (String, Value) {
    let mut reader = BufReader::new(stream);
    let mut head = String::new();
    let mut len = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        if line == "\r\n" {
            break;
        }
        head.push_str(&line);
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    (head, serde_json::from_slice(&body).unwrap())
}

/// Serves one request with the given status and body after `delay`, and
/// hands the parsed request back.
fn stub(status: u16, body: String, delay: Duration) -> (String, mpsc::Receiver<(String, Value)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let req = read_request(&mut stream);
        let _ = tx.send(req);
        thread::sleep(delay);
        let resp = format!(
            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        );
        let _ = stream.write_all(resp.as_bytes());
    });
    (url, rx)
}

fn chat(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn content_is_returned_byte_for_byte() {
    let sentinel = "Action: {\"decision\": \"ignore\"}\n  trailing spaces  \u{1F4A1} é\t```";
    let (url, rx) = stub(200, chat(sentinel), Duration::ZERO);
    let b = HttpBackend::new(&url, "llama3:8b", Duration::from_secs(5)).unwrap();
    let r = b.complete(&request()).unwrap();
    assert_eq!(r.text, sentinel);
    assert_eq!(r.backend_id, "http:llama3:8b");

    let (head, body) = rx.recv().unwrap();
    assert!(head.starts_with("POST /v1/chat/completions "));
    assert_eq!(body["model"], "llama3:8b");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(
        body["messages"],
        json!([
            {"role": "system", "content": "You are a home assistant."},
            {"role": "user", "content": "User said: \"lights\""},
        ])
    );
}

#[test]
fn trailing_slash_in_base_url_is_ignored() {
    let (url, _rx) = stub(200, chat("ok"), Duration::ZERO);
    let b = HttpBackend::new(&format!("{url}/"), "m", Duration::from_secs(5)).unwrap();
    assert_eq!(b.complete(&request()).unwrap().text, "ok");
}

#[test]
fn server_errors_carry_status_and_body() {
    let (url, _rx) = stub(503, "model loading".into(), Duration::ZERO);
    let b = HttpBackend::new(&url, "m", Duration::from_secs(5)).unwrap();
    match b.complete(&request()) {
        Err(BackendError::Server { status, body }) => {
            assert_eq!(status, 503);
            assert_eq!(body, "model loading");
        }
        other => panic!("expected a server error, got {other:?}"),
    }
}

#[test]
fn malformed_bodies_are_protocol_errors() {
    for body in ["not json".to_string(), json!({"choices": []}).to_string()] {
        let (url, _rx) = stub(200, body, Duration::ZERO);
        let b = HttpBackend::new(&url, "m", Duration::from_secs(5)).unwrap();
        assert!(matches!(b.complete(&request()), Err(BackendError::Protocol(_))));
    }
}

#[test]
fn slow_servers_time_out() {
    let (url, _rx) = stub(200, chat("late"), Duration::from_secs(3));
    let b = HttpBackend::new(&url, "m", Duration::from_millis(300)).unwrap();
    assert!(matches!(b.complete(&request()), Err(BackendError::Timeout)));
}

#[test]
fn unreachable_servers_are_transport_errors() {
    // Bind then drop, so the port is very likely closed.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let b = HttpBackend::new(&format!("http://127.0.0.1:{port}"), "m", Duration::from_secs(2)).unwrap();
    assert!(matches!(b.complete(&request()), Err(BackendError::Transport(_))));
}
