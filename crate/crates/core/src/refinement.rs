//! Memorization-aware refinement of synthetic text.
//!
//! Exact duplicates are dropped, then records most similar to any private
//! seed, then records the surrogate finds too predictable (low NLL). The
//! survivors get a final PII pass.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusRecord, Role};
use crate::error::{ConfigViolation, Error, Result};
use crate::generation::{dot, embed_all, Embedder};
use crate::pii::{self, PiiCategory};
use crate::surrogate::{corpus_fingerprint, NgramModel, SequenceScorer, SurrogateConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementConfig {
    /// Fraction of records the cosine filter keeps.
    pub similarity_keep: f64,
    /// Fraction of records the NLL filter keeps.
    pub nll_keep: f64,
    pub dedup: bool,
    pub order: usize,
    pub smoothing: f64,
    pub epochs: u32,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        let s = SurrogateConfig::default();
        Self {
            similarity_keep: 0.65,
            nll_keep: 0.55,
            dedup: true,
            order: s.order,
            smoothing: s.smoothing,
            epochs: s.epochs,
        }
    }
}

impl RefinementConfig {
    pub fn surrogate(&self) -> SurrogateConfig {
        SurrogateConfig {
            order: self.order,
            smoothing: self.smoothing,
            epochs: self.epochs,
        }
    }

    pub fn violations(&self) -> Vec<ConfigViolation> {
        let mut v = Vec::new();
        let mut bad = |key: &str, constraint: &str| {
            v.push(ConfigViolation {
                key: format!("[refinement].{key}"),
                constraint: constraint.to_string(),
            })
        };
        if !(self.similarity_keep > 0.0 && self.similarity_keep <= 1.0) {
            bad("similarity_keep", "must lie in (0, 1]");
        }
        if !(self.nll_keep > 0.0 && self.nll_keep <= 1.0) {
            bad("nll_keep", "must lie in (0, 1]");
        }
        if self.order == 0 {
            bad("order", "must be at least 1");
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            bad("smoothing", "must be > 0");
        }
        if self.epochs == 0 {
            bad("epochs", "must be at least 1");
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub id: String,
    /// Stage-specific score: max cosine, NLL, or 0 for dedup.
    pub score: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterTrace {
    pub stage: String,
    pub input: usize,
    pub output: usize,
    pub fraction: Option<f64>,
    pub threshold: Option<f64>,
    pub decisions: Vec<Decision>,
}

impl FilterTrace {
    fn new(stage: &str, fraction: Option<f64>, threshold: Option<f64>, decisions: Vec<Decision>) -> Self {
        let output = decisions.iter().filter(|d| d.kept).count();
        Self {
            stage: stage.to_string(),
            input: decisions.len(),
            output,
            fraction,
            threshold,
            decisions,
        }
    }
}

/// `floor(n·f)`, at least one record when `n > 0`.
pub fn retained_count(n: usize, fraction: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let k = (n as f64 * fraction + 1e-9).floor() as usize;
    k.clamp(1, n)
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("retained fraction {fraction} outside (0, 1]")))
    }
}

/// Keep mask selecting the `retained_count` lowest scores, ties by id.
/// Records flagged in `forced_out` are removed regardless of quota.
pub fn keep_lowest(ids: &[&str], scores: &[f64], fraction: f64, forced_out: &[bool]) -> Vec<bool> {
    let n = scores.len();
    let quota = retained_count(n, fraction);
    let mut order: Vec<usize> = (0..n).filter(|&i| !forced_out[i]).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then_with(|| ids[a].cmp(ids[b])));
    let mut keep = vec![false; n];
    for &i in order.iter().take(quota) {
        keep[i] = true;
    }
    keep
}

/// Nearest-rank cut: with `keep = retained_count(n, f)`, τ is the
/// `(n − keep)`-th smallest score, or just below the minimum when all are kept.
pub fn nll_threshold(scores: &[f64], fraction: f64) -> Result<f64> {
    check_fraction(fraction)?;
    if scores.is_empty() {
        return Err(Error::invalid("NLL threshold of an empty score list"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("non-finite NLL score"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let keep = retained_count(n, fraction);
    Ok(if keep == n {
        sorted[0].next_down()
    } else {
        sorted[n - keep - 1]
    })
}

/// Exact-string dedup keeping the first occurrence.
pub fn dedup(records: &[CorpusRecord]) -> (Vec<CorpusRecord>, FilterTrace) {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let decisions = records
        .iter()
        .map(|r| {
            let fresh = seen.insert(r.text.as_str());
            if fresh {
                kept.push(r.clone());
            }
            Decision {
                id: r.id.clone(),
                score: 0.0,
                kept: fresh,
            }
        })
        .collect();
    (kept, FilterTrace::new("dedup", None, None, decisions))
}

/// Drops the records most similar (max cosine over all seeds) to the
/// private corpus. Verbatim copies of a seed, raw or redacted, are always
/// dropped when `fraction < 1`.
pub fn cosine_filter(
    synthetic: &[CorpusRecord],
    seeds: &[CorpusRecord],
    embedder: &dyn Embedder,
    retries: u32,
    fraction: f64,
) -> Result<(Vec<CorpusRecord>, FilterTrace)> {
    check_fraction(fraction)?;
    if synthetic.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("cosine filter needs non-empty synthetic and seed corpora"));
    }
    let syn_vecs = embed_all(embedder, &texts(synthetic), retries)?;
    let seed_vecs = embed_all(embedder, &texts(seeds), retries)?;
    if syn_vecs[0].len() != seed_vecs[0].len() {
        return Err(Error::Adapter("embedding dimension differs between corpora".into()));
    }
    let scores: Vec<f64> = syn_vecs
        .par_iter()
        .map(|v| {
            seed_vecs
                .iter()
                .map(|s| dot(v, s).clamp(-1.0, 1.0))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    let forced: Vec<bool> = if fraction < 1.0 {
        let mut private: HashSet<String> = HashSet::new();
        for s in seeds {
            private.insert(s.text.clone());
            private.insert(pii::redact(&s.text).text);
        }
        synthetic
            .par_iter()
            .map(|r| private.contains(&r.text) || private.contains(&pii::redact(&r.text).text))
            .collect()
    } else {
        vec![false; synthetic.len()]
    };
    let ids: Vec<&str> = synthetic.iter().map(|r| r.id.as_str()).collect();
    let keep = keep_lowest(&ids, &scores, fraction, &forced);
    let threshold = scores
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(s, _)| *s)
        .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))));
    Ok(finish("cosine", synthetic, &scores, &keep, fraction, threshold))
}

/// Keeps records whose NLL under `scorer` is strictly above τ.
pub fn nll_filter(
    records: &[CorpusRecord],
    scorer: &dyn SequenceScorer,
    fraction: f64,
) -> Result<(Vec<CorpusRecord>, f64, FilterTrace)> {
    check_fraction(fraction)?;
    if records.is_empty() {
        return Err(Error::invalid("NLL filter of an empty corpus"));
    }
    let scores: Vec<f64> = records
        .par_iter()
        .map(|r| scorer.nll(&r.text).map_err(|e| e.in_stage("nll_filter", &r.id)))
        .collect::<Result<_>>()?;
    let tau = nll_threshold(&scores, fraction)?;
    let keep: Vec<bool> = scores.iter().map(|&s| s > tau).collect();
    let (kept, trace) = finish("nll", records, &scores, &keep, fraction, Some(tau));
    Ok((kept, tau, trace))
}

fn finish(
    stage: &str,
    records: &[CorpusRecord],
    scores: &[f64],
    keep: &[bool],
    fraction: f64,
    threshold: Option<f64>,
) -> (Vec<CorpusRecord>, FilterTrace) {
    let mut kept = Vec::new();
    let mut decisions = Vec::with_capacity(records.len());
    for ((r, &s), &k) in records.iter().zip(scores).zip(keep) {
        if k {
            kept.push(r.clone());
        }
        decisions.push(Decision {
            id: r.id.clone(),
            score: s,
            kept: k,
        });
    }
    (kept, FilterTrace::new(stage, Some(fraction), threshold, decisions))
}

fn texts(records: &[CorpusRecord]) -> Vec<String> {
    records.iter().map(|r| r.text.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub input: usize,
    pub output: usize,
    pub tau: f64,
    pub surrogate_fingerprint: String,
    pub variants_fingerprint: String,
    pub traces: Vec<FilterTrace>,
    pub pii_redactions: BTreeMap<PiiCategory, usize>,
}

#[derive(Debug, Clone)]
pub struct Refined {
    pub records: Vec<CorpusRecord>,
    pub surrogate: NgramModel,
    pub report: RefinementReport,
}

/// Trains the surrogate on `variants`, then dedup → cosine → NLL → PII.
/// Output records carry the `refined` role and no lineage.
pub fn refine(
    variants: &[CorpusRecord],
    synthetic: &[CorpusRecord],
    seeds: &[CorpusRecord],
    embedder: &dyn Embedder,
    retries: u32,
    cfg: &RefinementConfig,
) -> Result<Refined> {
    cfg.validate()?;
    if variants.is_empty() {
        return Err(Error::invalid("refinement needs at least one variant to train the surrogate"));
    }
    if synthetic.is_empty() {
        return Err(Error::invalid("refinement of an empty synthetic corpus"));
    }
    let variant_texts = texts(variants);
    let surrogate = NgramModel::train(&variant_texts, &cfg.surrogate())?;
    let mut traces = Vec::new();

    let pool = if cfg.dedup {
        let (kept, trace) = dedup(synthetic);
        traces.push(trace);
        kept
    } else {
        synthetic.to_vec()
    };
    let (pool, trace) = cosine_filter(&pool, seeds, embedder, retries, cfg.similarity_keep)?;
    traces.push(trace);
    if pool.is_empty() {
        return Err(Error::invalid("cosine filter removed every record"));
    }
    let (pool, tau, trace) = nll_filter(&pool, &surrogate, cfg.nll_keep)?;
    traces.push(trace);

    let mut redactions: BTreeMap<PiiCategory, usize> = BTreeMap::new();
    let records: Vec<CorpusRecord> = pool
        .into_iter()
        .map(|r| {
            let red = pii::redact(&r.text);
            for (c, n) in &red.counts {
                *redactions.entry(*c).or_default() += n;
            }
            CorpusRecord {
                id: r.id,
                text: red.text,
                sentiment: r.sentiment,
                role: Role::Refined,
                lineage: None,
            }
        })
        .collect();

    let report = RefinementReport {
        input: synthetic.len(),
        output: records.len(),
        tau,
        surrogate_fingerprint: surrogate.fingerprint().to_string(),
        variants_fingerprint: corpus_fingerprint(&variant_texts),
        traces,
        pii_redactions: redactions,
    };
    Ok(Refined {
        records,
        surrogate,
        report,
    })
}
