//! TOML run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::abstraction::AbstractionConfig;
use crate::corpus::Format;
use crate::dp::{self, PrivacyParams};
use crate::error::{ConfigViolation, Error, Result};
use crate::generation::remote::{RemoteEmbedder, RemoteGenerator, RemoteSentiment, RemoteSettings};
use crate::generation::stub::{HashEmbedder, IdentityGenerator, LexiconSentiment, ShuffleGenerator, SynonymGenerator};
use crate::generation::{DatasetProfile, Embedder, GenerationParams, RateLimiter, SentimentClassifier, TextGenerator};
use crate::metrics::MetricsConfig;
use crate::mia::MiaConfig;
use crate::refinement::RefinementConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub private: Option<PathBuf>,
    /// Inferred from the file extension when unset.
    pub format: Option<Format>,
    /// All records when unset.
    pub n_seeds: Option<usize>,
    pub profile: DatasetProfile,
    pub synthetic_per_variant: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            private: None,
            format: None,
            n_seeds: None,
            profile: DatasetProfile::RedditStyle,
            synthetic_per_variant: 1,
        }
    }
}

impl DataConfig {
    pub fn resolved_format(&self) -> Format {
        self.format.unwrap_or_else(|| match self.private.as_ref().and_then(|p| p.extension()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacyConfig {
    #[serde(with = "dp::epsilon_serde")]
    pub epsilon: f64,
    pub delta_override: Option<f64>,
    pub sensitivity: f64,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            delta_override: None,
            sensitivity: 1.0,
        }
    }
}

impl PrivacyConfig {
    /// δ from the override, else from the private corpus size.
    pub fn params(&self, n_priv: usize) -> Result<PrivacyParams> {
        match self.delta_override {
            Some(d) => PrivacyParams::new(self.epsilon, d, self.sensitivity),
            None => PrivacyParams::for_corpus(self.epsilon, n_priv, self.sensitivity),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdapterKind {
    Remote,
    Stub,
    StubIdentity,
    StubShuffle,
    StubSynonym,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterConfig {
    pub kind: AdapterKind,
    pub base_url: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Requests per second; unlimited when unset.
    pub rps: Option<f64>,
    pub retries: u32,
    /// Seconds.
    pub timeout: f64,
    /// Stub embedder dimension.
    pub dim: usize,
    /// Stub synonym replacement rate.
    pub synonym_rate: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        let g = GenerationParams::default();
        Self {
            kind: AdapterKind::Remote,
            base_url: None,
            model: String::new(),
            temperature: g.temperature,
            max_tokens: g.max_tokens,
            rps: None,
            retries: g.retries,
            timeout: g.timeout.as_secs_f64(),
            dim: HashEmbedder::default().dim,
            synonym_rate: SynonymGenerator::default().rate,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum AdapterRole {
    Generator,
    Embedder,
    Sentiment,
}

impl AdapterConfig {
    fn violations(&self, section: &str, role: AdapterRole) -> Vec<ConfigViolation> {
        let mut v = Vec::new();
        let mut bad = |key: &str, constraint: &str| {
            v.push(ConfigViolation {
                key: format!("[{section}].{key}"),
                constraint: constraint.to_string(),
            })
        };
        let kind_ok = match role {
            AdapterRole::Generator => self.kind != AdapterKind::Stub,
            _ => matches!(self.kind, AdapterKind::Remote | AdapterKind::Stub),
        };
        if !kind_ok {
            bad(
                "kind",
                match role {
                    AdapterRole::Generator => "must be remote, stub-identity, stub-shuffle or stub-synonym",
                    _ => "must be remote or stub",
                },
            );
        }
        if self.kind == AdapterKind::Remote && self.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
            bad("base_url", "required when kind = \"remote\"");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            bad("temperature", "must lie in [0, 2]");
        }
        if self.max_tokens == 0 {
            bad("max_tokens", "must be at least 1");
        }
        if let Some(r) = self.rps {
            if !(r > 0.0 && r.is_finite()) {
                bad("rps", "must be > 0");
            }
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            bad("timeout", "must be > 0 seconds");
        }
        if self.dim == 0 {
            bad("dim", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.synonym_rate) {
            bad("synonym_rate", "must lie in [0, 1]");
        }
        v
    }

    pub fn params(&self) -> GenerationParams {
        GenerationParams {
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            model: self.model.clone(),
            retries: self.retries,
            timeout: Duration::from_secs_f64(self.timeout),
            ..GenerationParams::default()
        }
    }

    fn remote(&self, unsafe_debug: bool) -> (RemoteSettings, Arc<RateLimiter>) {
        let mut s = RemoteSettings::new(self.base_url.clone().unwrap_or_default(), self.model.clone());
        s.timeout = Duration::from_secs_f64(self.timeout);
        s.unsafe_debug = unsafe_debug;
        let limiter = Arc::new(RateLimiter::new(self.rps.unwrap_or(0.0)));
        (s, limiter)
    }

    pub fn build_generator(&self, unsafe_debug: bool) -> Arc<dyn TextGenerator> {
        match self.kind {
            AdapterKind::Remote => {
                let (s, l) = self.remote(unsafe_debug);
                Arc::new(RemoteGenerator::new(s, l))
            }
            AdapterKind::StubShuffle => Arc::new(ShuffleGenerator),
            AdapterKind::StubSynonym => Arc::new(SynonymGenerator { rate: self.synonym_rate }),
            AdapterKind::StubIdentity | AdapterKind::Stub => Arc::new(IdentityGenerator),
        }
    }

    pub fn build_embedder(&self, unsafe_debug: bool) -> Arc<dyn Embedder> {
        match self.kind {
            AdapterKind::Remote => {
                let (s, l) = self.remote(unsafe_debug);
                Arc::new(RemoteEmbedder::new(s, l))
            }
            _ => Arc::new(HashEmbedder { dim: self.dim }),
        }
    }

    pub fn build_sentiment(&self, unsafe_debug: bool) -> Arc<dyn SentimentClassifier> {
        match self.kind {
            AdapterKind::Remote => {
                let (s, l) = self.remote(unsafe_debug);
                Arc::new(RemoteSentiment::new(s, l))
            }
            _ => Arc::new(LexiconSentiment),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub emit_lineage: bool,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("rpsg-out"),
            emit_lineage: false,
            jobs: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub privacy: PrivacyConfig,
    pub abstraction: AbstractionConfig,
    pub generator: AdapterConfig,
    /// Generator override for the abstraction stage.
    pub abstractor: Option<AdapterConfig>,
    /// Generator override for the variant and synthetic stages.
    pub synthesizer: Option<AdapterConfig>,
    pub embedder: AdapterConfig,
    pub sentiment: AdapterConfig,
    pub refinement: RefinementConfig,
    pub metrics: MetricsConfig,
    pub mia: MiaConfig,
    pub run: RunConfig,
}

impl PipelineConfig {
    /// Every violated constraint, in section order.
    pub fn violations(&self) -> Vec<ConfigViolation> {
        let mut v = Vec::new();
        let mut bad = |key: &str, constraint: &str| {
            v.push(ConfigViolation {
                key: key.to_string(),
                constraint: constraint.to_string(),
            })
        };
        match &self.data.private {
            None => bad("[data].private", "required"),
            Some(p) if !p.is_file() => bad("[data].private", "file does not exist"),
            _ => {}
        }
        if self.data.n_seeds == Some(0) {
            bad("[data].n_seeds", "must be at least 1");
        }
        if self.data.synthetic_per_variant == 0 {
            bad("[data].synthetic_per_variant", "must be at least 1");
        }
        let eps = self.privacy.epsilon;
        if !(eps > 0.0) {
            bad("[privacy].epsilon", "must be > 0 or \"inf\"");
        }
        if let Some(d) = self.privacy.delta_override {
            if !(d > 0.0 && d < 1.0) {
                bad("[privacy].delta_override", "must lie in (0, 1)");
            }
        }
        if !(self.privacy.sensitivity > 0.0 && self.privacy.sensitivity.is_finite()) {
            bad("[privacy].sensitivity", "must be > 0");
        }
        if self.run.jobs == 0 {
            bad("[run].jobs", "must be at least 1");
        }
        v.extend(self.abstraction.violations("abstraction"));
        v.extend(self.generator.violations("generator", AdapterRole::Generator));
        if let Some(a) = &self.abstractor {
            v.extend(a.violations("abstractor", AdapterRole::Generator));
        }
        if let Some(s) = &self.synthesizer {
            v.extend(s.violations("synthesizer", AdapterRole::Generator));
        }
        v.extend(self.embedder.violations("embedder", AdapterRole::Embedder));
        v.extend(self.sentiment.violations("sentiment", AdapterRole::Sentiment));
        v.extend(self.refinement.violations());
        v.extend(self.metrics.violations());
        v.extend(self.mia.violations());
        v
    }

    pub fn validate(self) -> Result<Self> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(v))
        }
    }

    /// Parses TOML with defaults for every missing key. Relative paths are
    /// resolved against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| {
            Error::Config(vec![ConfigViolation {
                key: "<file>".into(),
                constraint: e.message().trim().to_string() + &span_hint(text, e.span()),
            }])
        })?;
        if let Some(base) = base {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            if let Some(p) = cfg.data.private.as_mut() {
                fix(p);
            }
            if let Some(p) = cfg.mia.reference.as_mut() {
                fix(p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())?.validate()
    }

    pub fn abstractor(&self) -> &AdapterConfig {
        self.abstractor.as_ref().unwrap_or(&self.generator)
    }

    pub fn synthesizer(&self) -> &AdapterConfig {
        self.synthesizer.as_ref().unwrap_or(&self.generator)
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(s) => format!(" (line {})", text[..s.start.min(text.len())].matches('\n').count() + 1),
        None => String::new(),
    }
}
