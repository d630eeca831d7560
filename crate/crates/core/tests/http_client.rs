use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use artiscene_core::providers::http::{HttpTransport, ProviderEndpoint};
use artiscene_core::providers::{Endpoint, ProviderError, Transport};
use serde_json::json;

enum Reply {
    Status(u16, &'static str),
    Hangup,
    Silent(Duration),
}

struct Seen {
    line: String,
    auth: Option<String>,
    body: String,
}

fn read_request(s: &mut TcpStream) -> Seen {
    let mut r = BufReader::new(s.try_clone().unwrap());
    let mut line = String::new();
    r.read_line(&mut line).unwrap();
    let (mut len, mut auth) = (0usize, None);
    loop {
        let mut h = String::new();
        r.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':').unwrap();
        match k.to_ascii_lowercase().as_str() {
            "content-length" => len = v.trim().parse().unwrap(),
            "authorization" => auth = Some(v.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; len];
    r.read_exact(&mut body).unwrap();
    Seen { line: line.trim_end().to_string(), auth, body: String::from_utf8(body).unwrap() }
}

/// Serves one scripted reply per connection and records every request.
fn serve(script: Vec<Reply>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", l.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for reply in script {
            let (mut s, _) = l.accept().unwrap();
            match reply {
                Reply::Hangup => drop(s),
                Reply::Silent(d) => {
                    log.lock().unwrap().push(read_request(&mut s));
                    thread::spawn(move || {
                        thread::sleep(d);
                        drop(s);
                    });
                }
                Reply::Status(code, body) => {
                    log.lock().unwrap().push(read_request(&mut s));
                    let _ = write!(
                        s,
                        "HTTP/1.1 {code} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                        body.len()
                    );
                }
            }
        }
    });
    (url, seen)
}

fn endpoint(url: &str, retries: u32) -> ProviderEndpoint {
    ProviderEndpoint {
        retries,
        backoff: Duration::from_millis(10),
        timeout: Duration::from_millis(500),
        ..ProviderEndpoint::new(url)
    }
}

#[test]
fn success_posts_json_with_bearer_key() {
    let (url, seen) = serve(vec![Reply::Status(200, r#"{"score": 31.5}"#)]);
    let t = HttpTransport::new(ProviderEndpoint { api_key: Some("k1".into()), ..endpoint(&url, 0) });
    let out = t.call(Endpoint::Score, &json!({"image": "", "text": "sofa"})).unwrap();
    assert_eq!(out, json!({"score": 31.5}));
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].line, "POST /v1/score HTTP/1.1");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer k1"));
    assert_eq!(serde_json::from_str::<serde_json::Value>(&seen[0].body).unwrap()["text"], "sofa");
}

#[test]
fn client_errors_map_to_rejected_without_retry() {
    let (url, seen) = serve(vec![Reply::Status(422, r#"{"error": "bad_mask", "detail": "mask is empty"}"#)]);
    let err = HttpTransport::new(endpoint(&url, 2)).call(Endpoint::Detect, &json!({})).unwrap_err();
    match err {
        ProviderError::Rejected { op, status, error, detail, input_hash } => {
            assert_eq!((op.as_str(), status, error.as_str(), detail.as_str()), ("detect", 422, "bad_mask", "mask is empty"));
            assert!(!input_hash.is_empty());
        }
        e => panic!("{e:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_are_not_retried() {
    let (url, seen) = serve(vec![Reply::Status(500, "boom"), Reply::Status(200, "{}")]);
    let err = HttpTransport::new(endpoint(&url, 2)).call(Endpoint::Depth, &json!({})).unwrap_err();
    assert!(matches!(err, ProviderError::Server { status: 500, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn dropped_connections_are_retried() {
    let (url, seen) = serve(vec![Reply::Hangup, Reply::Hangup, Reply::Status(200, r#"{"vector": [1.0]}"#)]);
    let out = HttpTransport::new(endpoint(&url, 2)).call(Endpoint::Embed, &json!({})).unwrap();
    assert_eq!(out, json!({"vector": [1.0]}));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn timeouts_retry_then_fail() {
    let (url, seen) = serve(vec![Reply::Silent(Duration::from_secs(2)), Reply::Silent(Duration::from_secs(2))]);
    let t0 = Instant::now();
    let err = HttpTransport::new(endpoint(&url, 1)).call(Endpoint::Render, &json!({})).unwrap_err();
    assert!(matches!(err, ProviderError::Timeout { attempts: 2, .. }), "{err:?}");
    assert!(t0.elapsed() >= Duration::from_millis(1000));
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn unreachable_after_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = HttpTransport::new(endpoint(&format!("http://127.0.0.1:{port}"), 2))
        .call(Endpoint::Depth, &json!({}))
        .unwrap_err();
    assert!(matches!(err, ProviderError::Unreachable { .. }), "{err:?}");
    assert!(err.to_string().contains("depth"));
}
