//! Oversampled, sentiment-aware abstraction of private seeds.
//!
//! For each seed, `K` candidates are generated, scored by
//! `β·cos + (1−β)·[labels agree] − λ·[labels disagree]`, and the best `m`
//! are kept. Agreement is only asserted when the classifier's confidence
//! reaches `κ`; below that the candidate is neither rewarded nor penalized.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusRecord, Role, Sentiment};
use crate::error::{ConfigViolation, Error, Result};
use crate::generation::{self, control_phrase, dot, Embedder, GenerationParams, Prompt, SentimentClassifier, TextGenerator};
use crate::rng::RngStream;
use crate::text::word_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbstractionConfig {
    pub m: usize,
    pub oversample_k: usize,
    pub beta: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub attempts: usize,
}

impl Default for AbstractionConfig {
    fn default() -> Self {
        Self {
            m: 5,
            oversample_k: 10,
            beta: 0.75,
            lambda: 0.15,
            kappa: 0.55,
            min_tokens: 50,
            max_tokens: 150,
            attempts: 2,
        }
    }
}

impl AbstractionConfig {
    pub fn violations(&self, section: &str) -> Vec<ConfigViolation> {
        let mut v = Vec::new();
        let mut bad = |key: &str, constraint: &str| {
            v.push(ConfigViolation {
                key: format!("[{section}].{key}"),
                constraint: constraint.to_string(),
            })
        };
        if self.m == 0 {
            bad("m", "must be at least 1");
        }
        if self.oversample_k < self.m {
            bad("oversample_k", "must be >= m");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            bad("beta", "must lie in [0, 1]");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            bad("lambda", "must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            bad("kappa", "must lie in [0, 1]");
        }
        if self.min_tokens > self.max_tokens {
            bad("min_tokens", "must be <= max_tokens");
        }
        if self.attempts == 0 {
            bad("attempts", "must be at least 1");
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations("abstraction");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agreement {
    Match,
    Mismatch,
    /// Seed unlabeled, or classifier confidence below the gate.
    Unknown,
}

pub fn agreement(seed: Option<Sentiment>, label: Sentiment, confidence: f64, kappa: f64) -> Agreement {
    match seed {
        None => Agreement::Unknown,
        Some(_) if confidence < kappa => Agreement::Unknown,
        Some(s) if s == label => Agreement::Match,
        Some(_) => Agreement::Mismatch,
    }
}

pub fn score_with(cos: f64, agreement: Agreement, cfg: &AbstractionConfig) -> f64 {
    let matched = if agreement == Agreement::Match { 1.0 } else { 0.0 };
    let flipped = if agreement == Agreement::Mismatch { 1.0 } else { 0.0 };
    cfg.beta * cos + (1.0 - cfg.beta) * matched - cfg.lambda * flipped
}

pub fn score_candidate(
    cos: f64,
    seed_label: Option<Sentiment>,
    candidate_label: Sentiment,
    confidence: f64,
    cfg: &AbstractionConfig,
) -> f64 {
    score_with(cos, agreement(seed_label, candidate_label, confidence, cfg.kappa), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub record: CorpusRecord,
    /// Generation index across all decode attempts.
    pub index: usize,
    pub cosine: f64,
    pub label: Sentiment,
    pub confidence: f64,
    pub agreement: Agreement,
    pub score: f64,
}

/// Indices ordered best first; ties go to the lower index.
pub fn rank(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// The three model adapters abstraction depends on.
#[derive(Clone, Copy)]
pub struct AbstractionAdapters<'a> {
    pub generator: &'a dyn TextGenerator,
    pub sentiment: &'a dyn SentimentClassifier,
    pub embedder: &'a dyn Embedder,
    pub retries: u32,
}

/// Abstracts one (already PII-redacted) seed into `cfg.m` scored candidates.
pub fn abstract_seed(
    seed: &CorpusRecord,
    adapters: AbstractionAdapters<'_>,
    params: &GenerationParams,
    cfg: &AbstractionConfig,
    rng: &RngStream,
) -> Result<Vec<ScoredCandidate>> {
    cfg.validate()?;
    let stage = |e: Error| e.in_stage("abstraction", &seed.id);
    let prompt = Prompt {
        instruction: control_phrase(seed.sentiment).map(str::to_string),
        input: seed.text.clone(),
    };
    let seed_vec = generation::embed(adapters.embedder, std::slice::from_ref(&seed.text), adapters.retries)
        .map_err(stage)?
        .remove(0);

    let mut pool: Vec<ScoredCandidate> = Vec::new();
    let mut next_index = 0usize;
    for attempt in 0..cfg.attempts {
        let mut texts = Vec::with_capacity(cfg.oversample_k);
        let mut indices = Vec::with_capacity(cfg.oversample_k);
        for _ in 0..cfg.oversample_k {
            let index = next_index;
            next_index += 1;
            let mut sub = rng.derive(&format!("attempt-{attempt}/{index}"));
            let text = generation::generate(adapters.generator, &prompt, params, &mut sub).map_err(stage)?;
            let words = word_count(&text);
            if words < cfg.min_tokens || words > cfg.max_tokens {
                log::debug!("seed {}: candidate {index} discarded ({words} tokens)", seed.id);
                continue;
            }
            texts.push(text);
            indices.push(index);
        }
        if !texts.is_empty() {
            let vecs = generation::embed(adapters.embedder, &texts, adapters.retries).map_err(stage)?;
            for ((text, index), v) in texts.into_iter().zip(indices).zip(vecs) {
                let (label, confidence) =
                    generation::classify_sentiment(adapters.sentiment, &text, adapters.retries).map_err(stage)?;
                let cosine = dot(&seed_vec, &v).clamp(-1.0, 1.0);
                let agreement = agreement(seed.sentiment, label, confidence, cfg.kappa);
                let score = score_with(cosine, agreement, cfg);
                let record = CorpusRecord {
                    id: format!("{}.a{index:02}", seed.id),
                    text,
                    sentiment: Some(label),
                    role: Role::AbstractionCandidate,
                    lineage: Some(seed.id.clone()),
                };
                pool.push(ScoredCandidate {
                    record,
                    index,
                    cosine,
                    label,
                    confidence,
                    agreement,
                    score,
                });
            }
        }
        let satisfied = seed.sentiment.is_none() || pool.iter().any(|c| c.agreement == Agreement::Match);
        if satisfied {
            break;
        }
        if attempt + 1 < cfg.attempts {
            log::debug!("seed {}: no candidate agrees at confidence >= {}; sampling retry", seed.id, cfg.kappa);
        }
    }

    if pool.len() < cfg.m {
        return Err(stage(Error::invalid(format!(
            "only {} usable candidates, need {}",
            pool.len(),
            cfg.m
        ))));
    }
    let scores: Vec<f64> = pool.iter().map(|c| c.score).collect();
    let order = rank(&scores);
    let mut slots: Vec<Option<ScoredCandidate>> = pool.into_iter().map(Some).collect();
    Ok(order
        .into_iter()
        .take(cfg.m)
        .map(|i| slots[i].take().expect("each index once"))
        .collect())
}

/// Per-seed abstraction, parallel over seeds. Output order follows input.
pub fn abstract_all(
    seeds: &[CorpusRecord],
    adapters: AbstractionAdapters<'_>,
    params: &GenerationParams,
    cfg: &AbstractionConfig,
    rng: &RngStream,
) -> Result<Vec<Vec<ScoredCandidate>>> {
    seeds
        .par_iter()
        .map(|s| abstract_seed(s, adapters, params, cfg, &rng.derive(&s.id)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::stub::{HashEmbedder, IdentityGenerator, LexiconSentiment, ShuffleGenerator};
    use crate::generation::{AdapterResult, Prompt};
    use proptest::prelude::*;

    fn defaults() -> AbstractionConfig {
        AbstractionConfig::default()
    }

    #[test]
    fn formula_examples() {
        let c = defaults();
        let s = score_candidate(1.0, Some(Sentiment::Positive), Sentiment::Positive, 0.9, &c);
        assert!((s - 1.0).abs() < 1e-12);
        let s = score_candidate(1.0, Some(Sentiment::Positive), Sentiment::Negative, 0.9, &c);
        assert!((s - 0.60).abs() < 1e-12);
        let c0 = AbstractionConfig { lambda: 0.0, ..defaults() };
        assert_eq!(score_candidate(0.0, Some(Sentiment::Positive), Sentiment::Negative, 0.9, &c0), 0.0);
    }

    #[test]
    fn gate_and_unlabeled_seed() {
        let c = defaults();
        // Below κ: neither bonus nor penalty.
        let s = score_candidate(0.8, Some(Sentiment::Positive), Sentiment::Positive, 0.5, &c);
        assert!((s - 0.75 * 0.8).abs() < 1e-12);
        let s = score_candidate(0.8, Some(Sentiment::Positive), Sentiment::Negative, 0.5, &c);
        assert!((s - 0.75 * 0.8).abs() < 1e-12);
        let s = score_candidate(0.4, None, Sentiment::Negative, 1.0, &c);
        assert!((s - 0.3).abs() < 1e-12);
    }

    #[test]
    fn config_defaults_and_violations() {
        assert!(defaults().validate().is_ok());
        let bad = AbstractionConfig {
            m: 11,
            beta: 1.5,
            ..defaults()
        };
        let v = bad.violations("abstraction");
        assert_eq!(v.len(), 2);
        assert!(v.iter().any(|x| x.key == "[abstraction].oversample_k"));
    }

    #[test]
    fn argmax_pick() {
        assert_eq!(rank(&[0.4, 0.9]), vec![1, 0]);
        assert_eq!(rank(&[0.5, 0.5, 0.7]), vec![2, 0, 1]);
    }

    fn long_text(prefix: &str) -> String {
        (0..60).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ") + " happy good"
    }

    fn adapters<'a>(g: &'a dyn TextGenerator) -> AbstractionAdapters<'a> {
        static E: HashEmbedder = HashEmbedder { dim: 256 };
        static S: LexiconSentiment = LexiconSentiment;
        AbstractionAdapters {
            generator: g,
            sentiment: &S,
            embedder: &E,
            retries: 0,
        }
    }

    #[test]
    fn identity_stub_gives_m_perfect_copies() {
        let seed = CorpusRecord::new("s1", long_text("w")).with_sentiment(Some(Sentiment::Positive));
        let out = abstract_seed(&seed, adapters(&IdentityGenerator), &GenerationParams::default(), &defaults(), &RngStream::new(1, "a")).unwrap();
        assert_eq!(out.len(), 5);
        for c in &out {
            assert!((c.score - 1.0).abs() < 1e-12);
            assert_eq!(c.record.text, seed.text);
            assert_eq!(c.record.lineage.as_deref(), Some("s1"));
            assert_eq!(c.record.role, Role::AbstractionCandidate);
        }
        let idx: Vec<_> = out.iter().map(|c| c.index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn short_candidates_discarded_then_error() {
        let seed = CorpusRecord::new("s2", "too short to pass");
        let err = abstract_seed(&seed, adapters(&IdentityGenerator), &GenerationParams::default(), &defaults(), &RngStream::new(1, "a")).unwrap_err();
        assert!(err.to_string().contains("s2"), "{err}");
    }

    struct Flipping;
    impl TextGenerator for Flipping {
        fn complete(&self, p: &Prompt, _: &GenerationParams, rng: &mut RngStream) -> AdapterResult<String> {
            // First attempt always negative, retry positive.
            let tail = if rng.label().contains("attempt-0") { " sad awful" } else { " happy great" };
            Ok(format!("{}{tail}", p.input))
        }
    }

    #[test]
    fn sampling_retry_when_no_candidate_agrees() {
        let base: String = (0..60).map(|i| format!("x{i}")).collect::<Vec<_>>().join(" ");
        let seed = CorpusRecord::new("s3", base).with_sentiment(Some(Sentiment::Positive));
        let out = abstract_seed(&seed, adapters(&Flipping), &GenerationParams::default(), &defaults(), &RngStream::new(2, "a")).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|c| c.agreement == Agreement::Match && c.index >= 10));
        let once = AbstractionConfig { attempts: 1, ..defaults() };
        let out = abstract_seed(&seed, adapters(&Flipping), &GenerationParams::default(), &once, &RngStream::new(2, "a")).unwrap();
        assert!(out.iter().all(|c| c.agreement == Agreement::Mismatch));
    }

    #[test]
    fn shuffled_candidates_are_deterministic() {
        let seed = CorpusRecord::new("s4", long_text("q"));
        let a = abstract_seed(&seed, adapters(&ShuffleGenerator), &GenerationParams::default(), &defaults(), &RngStream::new(3, "a")).unwrap();
        let b = abstract_seed(&seed, adapters(&ShuffleGenerator), &GenerationParams::default(), &defaults(), &RngStream::new(3, "a")).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn raising_cosine_never_lowers_rank(
            cos in prop::collection::vec(-1.0f64..1.0, 2..12),
            labels in prop::collection::vec(any::<bool>(), 12),
            pick in 0usize..12,
            bump in 0.0f64..1.0,
        ) {
            let c = defaults();
            let n = cos.len();
            let pick = pick % n;
            let lab = |i: usize| if labels[i] { Sentiment::Positive } else { Sentiment::Negative };
            let scores: Vec<f64> = (0..n).map(|i| score_candidate(cos[i], Some(Sentiment::Positive), lab(i), 0.9, &c)).collect();
            let mut cos2 = cos.clone();
            cos2[pick] = (cos2[pick] + bump).min(1.0);
            let scores2: Vec<f64> = (0..n).map(|i| score_candidate(cos2[i], Some(Sentiment::Positive), lab(i), 0.9, &c)).collect();
            let pos = |r: &[usize]| r.iter().position(|&i| i == pick).unwrap();
            prop_assert!(pos(&rank(&scores2)) <= pos(&rank(&scores)));
        }

        #[test]
        fn no_penalty_all_match_ranks_by_cosine(cos in prop::collection::vec(-1.0f64..1.0, 1..12)) {
            let c = AbstractionConfig { lambda: 0.0, ..defaults() };
            let scores: Vec<f64> = cos.iter().map(|&x| score_candidate(x, Some(Sentiment::Negative), Sentiment::Negative, 1.0, &c)).collect();
            prop_assert_eq!(rank(&scores), rank(&cos));
        }
    }
}
