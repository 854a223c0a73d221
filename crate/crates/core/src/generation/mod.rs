//! Text generation, embedding and sentiment adapters.
//!
//! Every external model sits behind one of three traits. Stub
//! implementations are pure functions of `(input, rng)`, which makes the whole
//! pipeline reproducible without network access; remote implementations talk
//! JSON over HTTP.

pub mod limiter;
pub mod prompt;
pub mod remote;
pub mod stub;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Sentiment;
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub use limiter::RateLimiter;
pub use prompt::{build_prompt, control_phrase, DatasetProfile, GenStage, Prompt};

/// Failure reported by an adapter.
#[derive(Debug, Clone, PartialEq)]
pub enum AdapterError {
    /// Worth retrying: timeouts, 429/5xx, empty completions.
    Transient(String),
    Fatal(String),
}

impl std::fmt::Display for AdapterError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdapterError::Transient(m) => write!(f, "transient: {m}"),
            AdapterError::Fatal(m) => write!(f, "fatal: {m}"),
        }
    }
}

pub type AdapterResult<T> = std::result::Result<T, AdapterError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub model: String,
    pub retries: u32,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    #[serde(with = "duration_secs")]
    pub backoff_base: Duration,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_tokens: 512,
            model: "stub".into(),
            retries: 3,
            timeout: Duration::from_secs(60),
            backoff_base: Duration::from_millis(250),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::invalid(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        Ok(())
    }
}

pub(crate) mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

pub trait TextGenerator: Send + Sync {
    fn complete(&self, prompt: &Prompt, params: &GenerationParams, rng: &mut RngStream) -> AdapterResult<String>;
}

pub trait Embedder: Send + Sync {
    /// Raw vectors, one per text; normalization happens in [`embed`].
    fn embed_batch(&self, texts: &[String]) -> AdapterResult<Vec<Vec<f64>>>;
}

pub trait SentimentClassifier: Send + Sync {
    fn classify(&self, text: &str) -> AdapterResult<(Sentiment, f64)>;
}

/// Runs `op` with exponential backoff on transient failures.
pub fn with_retries<T>(
    retries: u32,
    backoff_base: Duration,
    mut op: impl FnMut() -> AdapterResult<T>,
) -> Result<T> {
    let mut causes = Vec::new();
    for attempt in 0..=retries {
        match op() {
            Ok(v) => return Ok(v),
            Err(AdapterError::Fatal(m)) => {
                causes.push(format!("attempt {}: {m}", attempt + 1));
                break;
            }
            Err(AdapterError::Transient(m)) => {
                causes.push(format!("attempt {}: {m}", attempt + 1));
                if attempt < retries {
                    let factor = 1u32 << attempt.min(16);
                    std::thread::sleep((backoff_base * factor).min(Duration::from_secs(30)));
                }
            }
        }
    }
    Err(Error::Adapter(causes.join("; ")))
}

/// One completion; empty output is retried like any transient failure.
pub fn generate(
    adapter: &dyn TextGenerator,
    prompt: &Prompt,
    params: &GenerationParams,
    rng: &mut RngStream,
) -> Result<String> {
    params.validate()?;
    with_retries(params.retries, params.backoff_base, || {
        let out = adapter.complete(prompt, params, rng)?;
        if out.trim().is_empty() {
            Err(AdapterError::Transient("empty completion".into()))
        } else {
            Ok(out)
        }
    })
}

/// Unit-normalized embeddings for a non-empty batch.
pub fn embed(adapter: &dyn Embedder, texts: &[String], retries: u32) -> Result<Vec<Vec<f64>>> {
    if texts.is_empty() {
        return Err(Error::invalid("embedding an empty batch"));
    }
    let raw = with_retries(retries, Duration::from_millis(250), || adapter.embed_batch(texts))?;
    if raw.len() != texts.len() {
        return Err(Error::Adapter(format!(
            "embedder returned {} vectors for {} texts",
            raw.len(),
            texts.len()
        )));
    }
    let dim = raw[0].len();
    raw.into_iter()
        .map(|v| {
            if v.len() != dim {
                return Err(Error::Adapter("embedder returned ragged vectors".into()));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Adapter("embedder returned a zero or non-finite vector".into()));
            }
            Ok(v.into_iter().map(|x| x / norm).collect())
        })
        .collect()
}

pub const EMBED_BATCH: usize = 64;

/// `embed` over batches of at most `EMBED_BATCH` texts, batches in parallel.
pub fn embed_all(adapter: &dyn Embedder, texts: &[String], retries: u32) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    if texts.is_empty() {
        return Err(Error::invalid("embedding an empty batch"));
    }
    let parts: Vec<Vec<Vec<f64>>> = texts
        .par_chunks(EMBED_BATCH)
        .map(|c| embed(adapter, c, retries))
        .collect::<Result<_>>()?;
    let out: Vec<Vec<f64>> = parts.into_iter().flatten().collect();
    if out.iter().any(|v| v.len() != out[0].len()) {
        return Err(Error::Adapter("embedder returned ragged vectors".into()));
    }
    Ok(out)
}

pub fn classify_sentiment(adapter: &dyn SentimentClassifier, text: &str, retries: u32) -> Result<(Sentiment, f64)> {
    if text.trim().is_empty() {
        return Err(Error::invalid("sentiment of empty text"));
    }
    let (label, conf) = with_retries(retries, Duration::from_millis(250), || adapter.classify(text))?;
    if !(0.0..=1.0).contains(&conf) {
        return Err(Error::Adapter(format!("sentiment confidence {conf} outside [0,1]")));
    }
    Ok((label, conf))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Flaky {
        fail_times: usize,
        calls: AtomicUsize,
        empty: bool,
    }

    impl TextGenerator for Flaky {
        fn complete(&self, prompt: &Prompt, _: &GenerationParams, _: &mut RngStream) -> AdapterResult<String> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_times {
                if self.empty {
                    Ok("  ".into())
                } else {
                    Err(AdapterError::Transient("503".into()))
                }
            } else {
                Ok(prompt.input.clone())
            }
        }
    }

    fn fast_params(retries: u32) -> GenerationParams {
        GenerationParams {
            retries,
            backoff_base: Duration::from_millis(1),
            ..Default::default()
        }
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let g = Flaky { fail_times: 2, calls: AtomicUsize::new(0), empty: false };
        let out = generate(&g, &Prompt::plain("hi"), &fast_params(3), &mut RngStream::new(0, "g")).unwrap();
        assert_eq!(out, "hi");
        assert_eq!(g.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn empty_completion_is_transient() {
        let g = Flaky { fail_times: 5, calls: AtomicUsize::new(0), empty: true };
        let err = generate(&g, &Prompt::plain("hi"), &fast_params(2), &mut RngStream::new(0, "g")).unwrap_err();
        assert!(err.to_string().contains("attempt 3: empty completion"), "{err}");
        assert_eq!(g.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn temperature_range_checked() {
        let g = Flaky { fail_times: 0, calls: AtomicUsize::new(0), empty: false };
        let p = GenerationParams { temperature: 2.5, ..fast_params(0) };
        assert!(generate(&g, &Prompt::plain("x"), &p, &mut RngStream::new(0, "g")).is_err());
    }
}
