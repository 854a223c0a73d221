//! HTTP adapters speaking the common chat-completion / embeddings JSON shapes.
//!
//! Request bodies may contain private text. They are only logged when
//! `unsafe_debug` is set.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{AdapterError, AdapterResult, Embedder, GenerationParams, Prompt, RateLimiter, SentimentClassifier, TextGenerator};
use crate::corpus::Sentiment;
use crate::rng::RngStream;

pub const API_KEY_ENV: &str = "RPSG_API_KEY";

#[derive(Debug, Clone)]
pub struct RemoteSettings {
    /// Base URL, e.g. `http://localhost:8080/v1`; endpoint paths are appended.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub unsafe_debug: bool,
}

impl RemoteSettings {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(60),
            unsafe_debug: false,
        }
    }
}

struct HttpJson {
    settings: RemoteSettings,
    agent: ureq::Agent,
    limiter: Arc<RateLimiter>,
    next_id: AtomicU64,
}

impl HttpJson {
    fn new(settings: RemoteSettings, limiter: Arc<RateLimiter>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            settings,
            agent,
            limiter,
            next_id: AtomicU64::new(0),
        }
    }

    fn post(&self, path: &str, body: &Value) -> AdapterResult<Value> {
        let url = format!("{}/{}", self.settings.base_url.trim_end_matches('/'), path);
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        self.limiter.acquire();
        if self.settings.unsafe_debug {
            log::debug!("request {id} POST {url}: {body}");
        } else {
            log::debug!("request {id} POST {url} (body withheld)");
        }
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.settings.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body.to_string())
            .map_err(|e| AdapterError::Transient(format!("request {id}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| AdapterError::Transient(format!("request {id}: reading body: {e}")))?;
        log::debug!("request {id} -> HTTP {status}");
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| AdapterError::Fatal(format!("request {id}: malformed JSON response: {e}"))),
            408 | 425 | 429 | 500..=599 => Err(AdapterError::Transient(format!("request {id}: HTTP {status}"))),
            _ => Err(AdapterError::Fatal(format!("request {id}: HTTP {status}"))),
        }
    }
}

/// `POST {base}/chat/completions` with
/// `{model, messages:[{role:"user",content}], temperature, max_tokens}`;
/// the completion is `choices[0].message.content`.
pub struct RemoteGenerator {
    http: HttpJson,
}

impl RemoteGenerator {
    pub fn new(settings: RemoteSettings, limiter: Arc<RateLimiter>) -> Self {
        Self {
            http: HttpJson::new(settings, limiter),
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl TextGenerator for RemoteGenerator {
    fn complete(&self, prompt: &Prompt, params: &GenerationParams, _: &mut RngStream) -> AdapterResult<String> {
        let model = if params.model.is_empty() || params.model == "stub" {
            &self.http.settings.model
        } else {
            &params.model
        };
        let body = json!({
            "model": model,
            "messages": [{"role": "user", "content": prompt.render()}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let v = self.http.post("chat/completions", &body)?;
        let parsed: ChatResponse =
            serde_json::from_value(v).map_err(|e| AdapterError::Fatal(format!("unexpected completion shape: {e}")))?;
        Ok(parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}

/// `POST {base}/embeddings` with `{model, input:[...]}`; vectors read from
/// `data[i].embedding`, ordered by `data[i].index` when present.
pub struct RemoteEmbedder {
    http: HttpJson,
}

impl RemoteEmbedder {
    pub fn new(settings: RemoteSettings, limiter: Arc<RateLimiter>) -> Self {
        Self {
            http: HttpJson::new(settings, limiter),
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl Embedder for RemoteEmbedder {
    fn embed_batch(&self, texts: &[String]) -> AdapterResult<Vec<Vec<f64>>> {
        let body = json!({"model": self.http.settings.model, "input": texts});
        let v = self.http.post("embeddings", &body)?;
        let mut parsed: EmbeddingResponse =
            serde_json::from_value(v).map_err(|e| AdapterError::Fatal(format!("unexpected embedding shape: {e}")))?;
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

/// `POST {base}/sentiment` with `{model, input}`; expects
/// `{"label": "positive"|"negative", "score": confidence}`.
pub struct RemoteSentiment {
    http: HttpJson,
}

impl RemoteSentiment {
    pub fn new(settings: RemoteSettings, limiter: Arc<RateLimiter>) -> Self {
        Self {
            http: HttpJson::new(settings, limiter),
        }
    }
}

#[derive(Deserialize)]
struct SentimentResponse {
    label: String,
    score: f64,
}

impl SentimentClassifier for RemoteSentiment {
    fn classify(&self, text: &str) -> AdapterResult<(Sentiment, f64)> {
        let body = json!({"model": self.http.settings.model, "input": text});
        let v = self.http.post("sentiment", &body)?;
        let parsed: SentimentResponse =
            serde_json::from_value(v).map_err(|e| AdapterError::Fatal(format!("unexpected sentiment shape: {e}")))?;
        let label = parsed
            .label
            .parse::<Sentiment>()
            .map_err(|e| AdapterError::Fatal(e.to_string()))?;
        Ok((label, parsed.score))
    }
}
