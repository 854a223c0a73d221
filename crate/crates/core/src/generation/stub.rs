//! Deterministic stand-ins for the external models.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{AdapterResult, Embedder, GenerationParams, Prompt, SentimentClassifier, TextGenerator};
use crate::corpus::Sentiment;
use crate::rng::RngStream;
use crate::text::tokenize;

/// Returns the prompt's input unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityGenerator;

impl TextGenerator for IdentityGenerator {
    fn complete(&self, prompt: &Prompt, _: &GenerationParams, _: &mut RngStream) -> AdapterResult<String> {
        Ok(prompt.input.clone())
    }
}

/// Seeded permutation of the input's whitespace-separated words.
#[derive(Debug, Default, Clone, Copy)]
pub struct ShuffleGenerator;

impl TextGenerator for ShuffleGenerator {
    fn complete(&self, prompt: &Prompt, _: &GenerationParams, rng: &mut RngStream) -> AdapterResult<String> {
        let mut words: Vec<&str> = prompt.input.split_whitespace().collect();
        words.shuffle(rng);
        Ok(words.join(" "))
    }
}

const SYNONYMS: &[&[&str]] = &[
    &["happy", "glad", "pleased", "cheerful"],
    &["sad", "unhappy", "down", "miserable"],
    &["angry", "furious", "upset", "mad"],
    &["tired", "exhausted", "drained", "worn"],
    &["big", "large", "huge", "massive"],
    &["small", "little", "tiny", "modest"],
    &["job", "work", "position", "gig"],
    &["boss", "manager", "supervisor", "lead"],
    &["friend", "buddy", "pal", "mate"],
    &["house", "home", "place", "apartment"],
    &["city", "town", "area", "neighborhood"],
    &["car", "vehicle", "ride", "auto"],
    &["money", "cash", "funds", "savings"],
    &["doctor", "physician", "clinician", "specialist"],
    &["problem", "issue", "trouble", "difficulty"],
    &["good", "great", "nice", "fine"],
    &["bad", "awful", "terrible", "poor"],
    &["quickly", "fast", "rapidly", "swiftly"],
    &["started", "began", "commenced", "kicked off"],
    &["moved", "relocated", "shifted", "transferred"],
    &["bought", "purchased", "got", "picked up"],
    &["worried", "anxious", "nervous", "concerned"],
    &["excited", "thrilled", "eager", "stoked"],
    &["mother", "mom", "mum", "ma"],
    &["father", "dad", "pop", "pa"],
    &["partner", "spouse", "significant other", "husband"],
    &["week", "weekend", "fortnight", "few days"],
    &["recently", "lately", "just", "newly"],
    &["really", "truly", "genuinely", "very"],
    &["study", "trial", "experiment", "investigation"],
    &["patients", "subjects", "participants", "individuals"],
    &["results", "findings", "outcomes", "data"],
    &["increased", "raised", "elevated", "boosted"],
    &["decreased", "reduced", "lowered", "diminished"],
    &["significant", "notable", "marked", "substantial"],
];

fn synonym_index() -> &'static HashMap<&'static str, usize> {
    static INDEX: OnceLock<HashMap<&'static str, usize>> = OnceLock::new();
    INDEX.get_or_init(|| {
        let mut m = HashMap::new();
        for (g, group) in SYNONYMS.iter().enumerate() {
            for w in *group {
                m.entry(*w).or_insert(g);
            }
        }
        m
    })
}

/// Replaces table words with a random synonym from their group, each with
/// probability `rate`. Leading and trailing punctuation is kept.
#[derive(Debug, Clone, Copy)]
pub struct SynonymGenerator {
    pub rate: f64,
}

impl Default for SynonymGenerator {
    fn default() -> Self {
        Self { rate: 0.5 }
    }
}

impl TextGenerator for SynonymGenerator {
    fn complete(&self, prompt: &Prompt, _: &GenerationParams, rng: &mut RngStream) -> AdapterResult<String> {
        let index = synonym_index();
        let out: Vec<String> = prompt
            .input
            .split_whitespace()
            .map(|word| {
                let start = word.find(|c: char| c.is_alphanumeric()).unwrap_or(word.len());
                let end = word.rfind(|c: char| c.is_alphanumeric()).map_or(start, |i| {
                    i + word[i..].chars().next().map_or(1, char::len_utf8)
                });
                let core = &word[start..end.max(start)];
                let lower = core.to_lowercase();
                match index.get(lower.as_str()) {
                    Some(&g) if rng.random::<f64>() < self.rate => {
                        let group = SYNONYMS[g];
                        let pick = group[rng.random_range(0..group.len())];
                        format!("{}{}{}", &word[..start], pick, &word[end.max(start)..])
                    }
                    _ => word.to_string(),
                }
            })
            .collect();
        Ok(out.join(" "))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashed bag-of-words counts.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl HashEmbedder {
    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }

    fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let toks = tokenize(text);
        if toks.is_empty() {
            v[self.bucket(text.trim())] = 1.0;
        }
        for t in toks {
            v[self.bucket(&t)] += 1.0;
        }
        v
    }
}

impl Embedder for HashEmbedder {
    fn embed_batch(&self, texts: &[String]) -> AdapterResult<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

const POSITIVE: &[&str] = &[
    "happy", "glad", "pleased", "cheerful", "good", "great", "nice", "fine", "love", "loved", "excited", "thrilled",
    "eager", "stoked", "grateful", "proud", "relieved", "hopeful", "enjoy", "enjoyed", "wonderful", "better",
    "improved", "success", "calm", "fun",
];

const NEGATIVE: &[&str] = &[
    "sad", "unhappy", "down", "miserable", "angry", "furious", "upset", "mad", "bad", "awful", "terrible", "poor",
    "worried", "anxious", "nervous", "concerned", "tired", "exhausted", "drained", "hate", "hated", "lonely",
    "stressed", "afraid", "worse", "failed", "broke", "hurt",
];

/// Lexicon vote: confidence is the majority share of lexicon hits; no hits
/// gives `(positive, 0.5)`.
#[derive(Debug, Default, Clone, Copy)]
pub struct LexiconSentiment;

impl SentimentClassifier for LexiconSentiment {
    fn classify(&self, text: &str) -> AdapterResult<(Sentiment, f64)> {
        let (mut pos, mut neg) = (0usize, 0usize);
        for t in tokenize(text) {
            if POSITIVE.contains(&t.as_str()) {
                pos += 1;
            } else if NEGATIVE.contains(&t.as_str()) {
                neg += 1;
            }
        }
        if pos + neg == 0 {
            return Ok((Sentiment::Positive, 0.5));
        }
        let label = if pos >= neg { Sentiment::Positive } else { Sentiment::Negative };
        Ok((label, pos.max(neg) as f64 / (pos + neg) as f64))
    }
}
