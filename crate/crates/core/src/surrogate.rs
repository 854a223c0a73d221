//! Count-based n-gram surrogate language model with add-k smoothing.
//!
//! `P(w | ctx) = (c(ctx, w) + k) / (c(ctx) + k·|V|)` over the prediction
//! vocabulary `V` (training word types plus `<unk>` and `</s>`). Contexts
//! are the previous `order − 1` tokens, left-padded with `<s>`. A context
//! never seen in training therefore yields the uniform distribution.
//!
//! Training for `e` epochs multiplies every count by `e`; the pseudo-count is
//! taken per epoch, so probabilities do not depend on `e`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text::tokenize;

pub const UNK: &str = "<unk>";
pub const EOS: &str = "</s>";
pub const BOS: &str = "<s>";
const UNK_ID: u32 = 0;
const EOS_ID: u32 = 1;
/// Sentence-start padding; appears in contexts only.
const BOS_ID: u32 = u32::MAX;

pub const MODEL_SCHEMA: &str = "rpsg.ngram.v1";

/// Anything that yields a mean per-token negative log-likelihood.
pub trait SequenceScorer: Send + Sync {
    fn nll(&self, text: &str) -> Result<f64>;

    fn perplexity(&self, text: &str) -> Result<f64> {
        Ok(self.nll(text)?.exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub order: usize,
    pub smoothing: f64,
    pub epochs: u32,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            order: 3,
            smoothing: 0.1,
            epochs: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    smoothing: f64,
    epochs: u32,
    vocab: Vec<String>,
    index: BTreeMap<String, u32>,
    contexts: BTreeMap<Vec<u32>, ContextCounts>,
    fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct SerializedModel {
    schema: String,
    order: usize,
    smoothing: f64,
    epochs: u32,
    fingerprint: String,
    vocab: Vec<String>,
    /// `[context..., token, count]` rows.
    counts: Vec<Vec<u64>>,
}

pub fn corpus_fingerprint<S: AsRef<str>>(texts: &[S]) -> String {
    let mut h = Sha256::new();
    for t in texts {
        h.update((t.as_ref().len() as u64).to_le_bytes());
        h.update(t.as_ref().as_bytes());
    }
    hex::encode(h.finalize())
}

impl NgramModel {
    pub fn train<S: AsRef<str>>(texts: &[S], cfg: &SurrogateConfig) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::invalid("cannot train a surrogate on an empty corpus"));
        }
        if cfg.order < 1 {
            return Err(Error::invalid("n-gram order must be at least 1"));
        }
        if !(cfg.smoothing > 0.0 && cfg.smoothing.is_finite()) {
            return Err(Error::invalid(format!("smoothing must be positive, got {}", cfg.smoothing)));
        }
        if cfg.epochs < 1 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        let tokenized: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
        let mut words: Vec<&str> = tokenized.iter().flatten().map(String::as_str).collect();
        words.sort_unstable();
        words.dedup();
        let mut vocab = vec![UNK.to_string(), EOS.to_string()];
        vocab.extend(words.into_iter().filter(|w| *w != UNK && *w != EOS).map(str::to_string));
        let index: BTreeMap<String, u32> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();

        let mut model = Self {
            order: cfg.order,
            smoothing: cfg.smoothing,
            epochs: cfg.epochs,
            vocab,
            index,
            contexts: BTreeMap::new(),
            fingerprint: corpus_fingerprint(texts),
        };
        let e = cfg.epochs as u64;
        for toks in &tokenized {
            let ids = model.encode(toks);
            model.for_each_event(&ids, |ctx, w, contexts| {
                let entry = contexts.entry(ctx.to_vec()).or_default();
                entry.total += e;
                *entry.next.entry(w).or_insert(0) += e;
            });
        }
        Ok(model)
    }

    fn encode(&self, toks: &[String]) -> Vec<u32> {
        toks.iter().map(|t| self.index.get(t).copied().unwrap_or(UNK_ID)).collect()
    }

    /// Visits every (context, predicted token) pair of one sentence,
    /// including the final end marker.
    fn for_each_event<F>(&mut self, ids: &[u32], mut f: F)
    where
        F: FnMut(&[u32], u32, &mut BTreeMap<Vec<u32>, ContextCounts>),
    {
        let ctx_len = self.order - 1;
        let mut padded = vec![BOS_ID; ctx_len];
        padded.extend_from_slice(ids);
        padded.push(EOS_ID);
        for t in ctx_len..padded.len() {
            f(&padded[t - ctx_len..t], padded[t], &mut self.contexts);
        }
    }

    fn prob_ids(&self, ctx: &[u32], w: u32) -> f64 {
        let v = self.vocab.len() as f64;
        let e = self.epochs as u64;
        let (c, total) = match self.contexts.get(ctx) {
            Some(cc) => (cc.next.get(&w).copied().unwrap_or(0) / e, cc.total / e),
            None => (0, 0),
        };
        (c as f64 + self.smoothing) / (total as f64 + self.smoothing * v)
    }

    /// `P(word | context)` where `context` holds surface tokens (the most
    /// recent `order − 1` are used; missing positions count as `<s>`, and
    /// `<s>` itself may be passed explicitly).
    pub fn prob(&self, context: &[&str], word: &str) -> f64 {
        let ctx_len = self.order - 1;
        let mut ctx = vec![BOS_ID; ctx_len];
        let tail: Vec<u32> = context
            .iter()
            .rev()
            .take(ctx_len)
            .rev()
            .map(|t| if *t == BOS { BOS_ID } else { self.index.get(*t).copied().unwrap_or(UNK_ID) })
            .collect();
        let start = ctx_len - tail.len();
        ctx[start..].copy_from_slice(&tail);
        let w = self.index.get(word).copied().unwrap_or(UNK_ID);
        self.prob_ids(&ctx, w)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn epochs(&self) -> u32 {
        self.epochs
    }

    /// Prediction vocabulary, `<unk>` and `</s>` first.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Raw (epoch-scaled) count of `word` following the surface context.
    pub fn count(&self, context: &[&str], word: &str) -> u64 {
        let ids: Vec<u32> = context
            .iter()
            .map(|t| if *t == BOS { BOS_ID } else { self.index.get(*t).copied().unwrap_or(UNK_ID) })
            .collect();
        let w = self.index.get(word).copied().unwrap_or(UNK_ID);
        self.contexts
            .get(ids.as_slice())
            .and_then(|c| c.next.get(&w).copied())
            .unwrap_or(0)
    }

    /// Surface form of every observed context (`<s>` for padding).
    pub fn observed_contexts(&self) -> Vec<Vec<String>> {
        self.contexts
            .keys()
            .map(|ctx| {
                ctx.iter()
                    .map(|&i| if i == BOS_ID { BOS.to_string() } else { self.vocab[i as usize].clone() })
                    .collect()
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let counts = self
            .contexts
            .iter()
            .flat_map(|(ctx, cc)| {
                cc.next.iter().map(move |(&w, &c)| {
                    let mut row: Vec<u64> = ctx.iter().map(|&x| x as u64).collect();
                    row.push(w as u64);
                    row.push(c);
                    row
                })
            })
            .collect();
        let s = SerializedModel {
            schema: MODEL_SCHEMA.into(),
            order: self.order,
            smoothing: self.smoothing,
            epochs: self.epochs,
            fingerprint: self.fingerprint.clone(),
            vocab: self.vocab.clone(),
            counts,
        };
        Ok(serde_json::to_string(&s)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let s: SerializedModel = serde_json::from_str(json)?;
        if s.schema != MODEL_SCHEMA {
            return Err(Error::invalid(format!("unsupported model schema {:?}", s.schema)));
        }
        if s.order < 1 || s.vocab.len() < 2 || s.epochs < 1 {
            return Err(Error::invalid("corrupt model header"));
        }
        let index = s.vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let mut contexts: BTreeMap<Vec<u32>, ContextCounts> = BTreeMap::new();
        for row in s.counts {
            if row.len() != s.order + 1 {
                return Err(Error::invalid("corrupt count row"));
            }
            let ctx: Vec<u32> = row[..s.order - 1].iter().map(|&x| x as u32).collect();
            let entry = contexts.entry(ctx).or_default();
            entry.total += row[s.order];
            entry.next.insert(row[s.order - 1] as u32, row[s.order]);
        }
        Ok(Self {
            order: s.order,
            smoothing: s.smoothing,
            epochs: s.epochs,
            vocab: s.vocab,
            index,
            contexts,
            fingerprint: s.fingerprint,
        })
    }
}

impl SequenceScorer for NgramModel {
    /// Mean of `−ln P` over the text's tokens plus the end marker.
    fn nll(&self, text: &str) -> Result<f64> {
        let toks = tokenize(text);
        if toks.is_empty() {
            return Err(Error::invalid("text has no tokens to score"));
        }
        let ids = self.encode(&toks);
        let ctx_len = self.order - 1;
        let mut padded = vec![BOS_ID; ctx_len];
        padded.extend_from_slice(&ids);
        padded.push(EOS_ID);
        let mut sum = 0.0;
        let mut n = 0usize;
        for t in ctx_len..padded.len() {
            sum -= self.prob_ids(&padded[t - ctx_len..t], padded[t]).ln();
            n += 1;
        }
        Ok(sum / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(order: usize, k: f64, epochs: u32) -> SurrogateConfig {
        SurrogateConfig {
            order,
            smoothing: k,
            epochs,
        }
    }

    #[test]
    fn counts_scale_with_epochs() {
        for e in [1, 3] {
            let m = NgramModel::train(&["a b", "a b"], &cfg(2, 0.1, e)).unwrap();
            assert_eq!(m.count(&["a"], "b"), 2 * e as u64);
        }
    }

    #[test]
    fn empty_corpus_and_bad_params() {
        let empty: [&str; 0] = [];
        assert!(NgramModel::train(&empty, &cfg(3, 0.1, 1)).is_err());
        assert!(NgramModel::train(&["a"], &cfg(0, 0.1, 1)).is_err());
        assert!(NgramModel::train(&["a"], &cfg(2, 0.0, 1)).is_err());
    }

    #[test]
    fn epochs_do_not_change_probabilities() {
        let corpus = ["the cat sat", "the dog sat down", "a cat ran"];
        let a = NgramModel::train(&corpus, &cfg(3, 0.1, 1)).unwrap();
        let b = NgramModel::train(&corpus, &cfg(3, 0.1, 3)).unwrap();
        for t in ["the cat sat down", "a dog", "zebra"] {
            assert_eq!(a.nll(t).unwrap(), b.nll(t).unwrap());
        }
    }

    #[test]
    fn uniform_limit() {
        let m = NgramModel::train(&["a b"], &cfg(3, 1e12, 1)).unwrap();
        assert_eq!(m.vocab().len(), 4);
        assert!((m.nll("a b").unwrap() - 4f64.ln()).abs() < 1e-9);
        assert!((m.perplexity("b a unknown").unwrap() - 4.0).abs() < 1e-6);
    }

    #[test]
    fn memorization_limit() {
        let m = NgramModel::train(&["a b c"], &cfg(3, 1e-12, 1)).unwrap();
        assert!(m.nll("a b c").unwrap() < 1e-9);
    }

    #[test]
    fn perplexity_is_exp_nll() {
        let m = NgramModel::train(&["x y z", "y z x"], &cfg(2, 0.5, 1)).unwrap();
        let t = "x y";
        assert_eq!(m.perplexity(t).unwrap(), m.nll(t).unwrap().exp());
    }

    #[test]
    fn empty_tokenization_errors() {
        let m = NgramModel::train(&["a"], &cfg(2, 0.5, 1)).unwrap();
        assert!(m.nll("  ... ").is_err());
    }

    #[test]
    fn serialization_round_trip_is_stable() {
        let corpus = ["one two three", "two three four", "one four"];
        let m = NgramModel::train(&corpus, &cfg(3, 0.2, 2)).unwrap();
        let json = m.to_json().unwrap();
        assert!(json.contains(MODEL_SCHEMA));
        let back = NgramModel::from_json(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), json);
        let again = NgramModel::train(&corpus, &cfg(3, 0.2, 2)).unwrap();
        assert_eq!(again.to_json().unwrap(), json);
    }

    #[test]
    fn explicit_start_padding() {
        let m = NgramModel::train(&["a b", "b a"], &cfg(3, 0.5, 1)).unwrap();
        assert_eq!(m.prob(&[BOS, BOS], "a"), m.prob(&[], "a"));
        assert_eq!(m.prob(&[BOS, "a"], "b"), m.prob(&["a"], "b"));
        assert_eq!(m.count(&[BOS, BOS], "a"), 1);
        assert!(m.observed_contexts().contains(&vec![BOS.to_string(), "b".to_string()]));
    }

    proptest::proptest! {
        #[test]
        fn training_text_scores_below_its_shuffles(
            corpus in proptest::collection::vec(
                proptest::collection::vec(proptest::sample::select(vec!["p", "q", "r", "s", "t", "u", "v", "w"]), 4..9),
                3..10,
            ),
        ) {
            use rand::seq::SliceRandom;
            let texts: Vec<String> = corpus.iter().map(|s| s.join(" ")).collect();
            let m = NgramModel::train(&texts, &cfg(3, 0.1, 1)).unwrap();
            let mut rng = crate::rng::RngStream::new(0, "shuffle");
            let held: Vec<String> = corpus
                .iter()
                .map(|s| {
                    let mut s = s.clone();
                    s.shuffle(&mut rng);
                    s.join(" ")
                })
                .collect();
            let mean = |ts: &[String]| ts.iter().map(|t| m.nll(t).unwrap()).sum::<f64>() / ts.len() as f64;
            proptest::prop_assert!(mean(&texts) < mean(&held));
        }
    }

    #[test]
    fn unigram_order_works() {
        let m = NgramModel::train(&["a a b"], &cfg(1, 1.0, 1)).unwrap();
        // V = {unk, eos, a, b}; counts a=2, b=1, eos=1, total 4.
        assert!((m.prob(&[], "a") - 3.0 / 8.0).abs() < 1e-15);
    }
}
