use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::JoinHandle;
use std::time::Duration;

use rpsg_core::corpus::Sentiment;
use rpsg_core::generation::remote::{RemoteEmbedder, RemoteGenerator, RemoteSentiment, RemoteSettings};
use rpsg_core::generation::{
    classify_sentiment, embed, generate, Embedder, GenerationParams, Prompt, RateLimiter, SentimentClassifier,
};
use rpsg_core::rng::RngStream;

struct Request {
    path: String,
    headers: Vec<String>,
    body: String,
}

/// Serves `responses` in order, one connection each, and hands back what it saw.
fn serve(responses: Vec<(u16, &'static str)>) -> (String, JoinHandle<Vec<Request>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
            let mut headers = Vec::new();
            let mut len = 0;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end().to_string();
                if h.is_empty() {
                    break;
                }
                if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(h);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            seen.push(Request {
                path,
                headers,
                body: String::from_utf8(buf).unwrap(),
            });
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let mut stream = reader.into_inner();
            stream.write_all(reply.as_bytes()).unwrap();
        }
        seen
    });
    (base, handle)
}

fn settings(base: &str, debug: bool) -> RemoteSettings {
    RemoteSettings {
        base_url: base.to_string(),
        model: "m-test".into(),
        api_key: Some("k-123".into()),
        timeout: Duration::from_secs(5),
        unsafe_debug: debug,
    }
}

fn limiter() -> Arc<RateLimiter> {
    Arc::new(RateLimiter::new(0.0))
}

fn fast(retries: u32) -> GenerationParams {
    GenerationParams {
        retries,
        backoff_base: Duration::from_millis(1),
        model: String::new(),
        ..Default::default()
    }
}

struct Capture(Mutex<Vec<String>>);

impl log::Log for Capture {
    fn enabled(&self, _: &log::Metadata) -> bool {
        true
    }

    fn log(&self, record: &log::Record) {
        self.0.lock().unwrap().push(record.args().to_string());
    }

    fn flush(&self) {}
}

fn captured() -> &'static Capture {
    static CAPTURE: OnceLock<&'static Capture> = OnceLock::new();
    CAPTURE.get_or_init(|| {
        let c: &'static Capture = Box::leak(Box::new(Capture(Mutex::new(Vec::new()))));
        log::set_logger(c).unwrap();
        log::set_max_level(log::LevelFilter::Trace);
        c
    })
}

const OK_CHAT: &str = r#"{"choices":[{"message":{"role":"assistant","content":"generated text"}}]}"#;

#[test]
fn chat_retries_after_503() {
    let (base, server) = serve(vec![(503, r#"{"error":"busy"}"#), (200, OK_CHAT)]);
    let g = RemoteGenerator::new(settings(&base, false), limiter());
    let prompt = Prompt {
        instruction: Some("Rewrite:".into()),
        input: "hello there".into(),
    };
    let out = generate(&g, &prompt, &fast(2), &mut RngStream::new(0, "t")).unwrap();
    assert_eq!(out, "generated text");
    let seen = server.join().unwrap();
    assert_eq!(seen.len(), 2);
    let body: serde_json::Value = serde_json::from_str(&seen[1].body).unwrap();
    assert_eq!(seen[1].path, "/v1/chat/completions");
    assert_eq!(body["model"], "m-test");
    assert_eq!(body["messages"][0]["content"], "Rewrite:\nhello there");
    assert!(seen[1].headers.iter().any(|h| h == "authorization: Bearer k-123" || h == "Authorization: Bearer k-123"));
}

#[test]
fn client_errors_are_not_retried() {
    let (base, server) = serve(vec![(400, r#"{"error":"bad"}"#)]);
    let g = RemoteGenerator::new(settings(&base, false), limiter());
    let err = generate(&g, &Prompt::plain("x"), &fast(3), &mut RngStream::new(0, "t")).unwrap_err();
    assert!(err.to_string().contains("HTTP 400"), "{err}");
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn empty_content_is_retried() {
    let (base, server) = serve(vec![(200, r#"{"choices":[{"message":{"content":""}}]}"#), (200, OK_CHAT)]);
    let g = RemoteGenerator::new(settings(&base, false), limiter());
    assert_eq!(generate(&g, &Prompt::plain("x"), &fast(1), &mut RngStream::new(0, "t")).unwrap(), "generated text");
    assert_eq!(server.join().unwrap().len(), 2);
}

#[test]
fn malformed_json_is_fatal() {
    let (base, server) = serve(vec![(200, "not json")]);
    let g = RemoteGenerator::new(settings(&base, false), limiter());
    assert!(generate(&g, &Prompt::plain("x"), &fast(3), &mut RngStream::new(0, "t")).is_err());
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn embeddings_follow_index_order() {
    let (base, server) = serve(vec![(
        200,
        r#"{"data":[{"index":1,"embedding":[0.0,2.0]},{"index":0,"embedding":[3.0,4.0]}]}"#,
    )]);
    let e = RemoteEmbedder::new(settings(&base, false), limiter());
    let texts = vec!["first".to_string(), "second".to_string()];
    assert_eq!(e.embed_batch(&texts).unwrap(), vec![vec![3.0, 4.0], vec![0.0, 2.0]]);
    let seen = server.join().unwrap();
    assert_eq!(seen[0].path, "/v1/embeddings");
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["input"], serde_json::json!(["first", "second"]));
}

#[test]
fn embed_normalizes_remote_vectors() {
    let (base, server) = serve(vec![(503, "{}"), (200, r#"{"data":[{"embedding":[3.0,4.0]}]}"#)]);
    let e = RemoteEmbedder::new(settings(&base, false), limiter());
    let v = embed(&e, &["t".to_string()], 1).unwrap();
    assert_eq!(v, vec![vec![0.6, 0.8]]);
    server.join().unwrap();
}

#[test]
fn sentiment_shape() {
    let (base, server) = serve(vec![(200, r#"{"label":"negative","score":0.875}"#)]);
    let s = RemoteSentiment::new(settings(&base, false), limiter());
    assert_eq!(s.classify("meh").unwrap(), (Sentiment::Negative, 0.875));
    server.join().unwrap();
    let (base, server) = serve(vec![(200, r#"{"label":"positive","score":1.5}"#)]);
    let s = RemoteSentiment::new(settings(&base, false), limiter());
    assert!(classify_sentiment(&s, "ok", 0).is_err());
    server.join().unwrap();
}

#[test]
fn request_bodies_stay_out_of_logs() {
    let logs = captured();
    let (base, server) = serve(vec![(200, OK_CHAT)]);
    let g = RemoteGenerator::new(settings(&base, false), limiter());
    generate(&g, &Prompt::plain("private marker quokka-7731"), &fast(0), &mut RngStream::new(0, "t")).unwrap();
    server.join().unwrap();

    let (base, server) = serve(vec![(200, OK_CHAT)]);
    let g = RemoteGenerator::new(settings(&base, true), limiter());
    generate(&g, &Prompt::plain("debug marker wombat-4410"), &fast(0), &mut RngStream::new(0, "t")).unwrap();
    server.join().unwrap();

    let lines = logs.0.lock().unwrap();
    assert!(lines.iter().any(|l| l.contains("body withheld")));
    assert!(lines.iter().all(|l| !l.contains("quokka-7731")));
    assert!(lines.iter().any(|l| l.contains("wombat-4410")));
}
