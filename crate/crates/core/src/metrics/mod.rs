//! Diversity and distributional-similarity metrics between a synthetic
//! corpus and the private corpus.

pub mod divergence;
pub mod fid;
pub mod lexical;
pub mod prf;
pub mod sinkhorn;
pub mod wasserstein;

use serde::{Deserialize, Serialize};

pub use divergence::histogram_divergences;
pub use fid::fid;
pub use lexical::{ngram_diversity, self_bleu};
pub use prf::precision_recall_f1;
pub use sinkhorn::sinkhorn_divergence;
pub use wasserstein::sliced_wasserstein;

use crate::error::{ConfigViolation, Error, Result};
use crate::generation::{embed_all, Embedder};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub bleu_order: usize,
    pub ngram_n: usize,
    pub kmeans_k: usize,
    pub sw_projections: usize,
    pub sinkhorn_lambda: f64,
    pub sinkhorn_max_iter: usize,
    pub knn_k: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            bleu_order: 4,
            ngram_n: 2,
            kmeans_k: 10,
            sw_projections: 64,
            sinkhorn_lambda: 0.1,
            sinkhorn_max_iter: 10_000,
            knn_k: 3,
        }
    }
}

impl MetricsConfig {
    pub fn violations(&self) -> Vec<ConfigViolation> {
        let mut v = Vec::new();
        let mut bad = |key: &str, constraint: &str| {
            v.push(ConfigViolation {
                key: format!("[metrics].{key}"),
                constraint: constraint.to_string(),
            })
        };
        if self.bleu_order == 0 {
            bad("bleu_order", "must be at least 1");
        }
        if self.ngram_n == 0 {
            bad("ngram_n", "must be at least 1");
        }
        if self.kmeans_k < 2 {
            bad("kmeans_k", "must be at least 2");
        }
        if self.sw_projections == 0 {
            bad("sw_projections", "must be at least 1");
        }
        if !(self.sinkhorn_lambda > 0.0 && self.sinkhorn_lambda.is_finite()) {
            bad("sinkhorn_lambda", "must be > 0");
        }
        if self.sinkhorn_max_iter == 0 {
            bad("sinkhorn_max_iter", "must be at least 1");
        }
        if self.knn_k == 0 {
            bad("knn_k", "must be at least 1");
        }
        v
    }
}

/// Parameters actually used, after shrinking to fit small corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub bleu_order: usize,
    pub ngram_n: usize,
    pub kmeans_k: usize,
    pub sw_projections: usize,
    pub sinkhorn_lambda: f64,
    pub knn_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub synthetic_count: usize,
    pub private_count: usize,
    pub self_bleu: f64,
    pub ngram_diversity: f64,
    pub fid: f64,
    pub kld: f64,
    pub tvd: f64,
    pub wasserstein: f64,
    pub sinkhorn: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub params: MetricParams,
}

/// Embeds both corpora and computes every metric.
///
/// The cluster count and neighbor count are reduced (with a warning) when a
/// corpus is too small for the configured values.
pub fn evaluate(
    synthetic: &[String],
    private: &[String],
    embedder: &dyn Embedder,
    retries: u32,
    cfg: &MetricsConfig,
    rng: &RngStream,
) -> Result<MetricReport> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    if synthetic.len() < 2 || private.len() < 2 {
        return Err(Error::invalid("evaluation needs at least two records per corpus"));
    }
    let self_bleu = self_bleu(synthetic, cfg.bleu_order)?;
    let ngram_diversity = ngram_diversity(synthetic, cfg.ngram_n)?;
    let a = embed_all(embedder, synthetic, retries)?;
    let b = embed_all(embedder, private, retries)?;

    let kmeans_k = cfg.kmeans_k.min(a.len());
    if kmeans_k != cfg.kmeans_k {
        log::warn!("kmeans_k reduced from {} to {kmeans_k} for a corpus of {}", cfg.kmeans_k, a.len());
    }
    let knn_k = cfg.knn_k.min(a.len().min(b.len()) - 1);
    if knn_k != cfg.knn_k {
        log::warn!("knn_k reduced from {} to {knn_k}", cfg.knn_k);
    }

    let fid = fid(&a, &b)?;
    let (kld, tvd) = histogram_divergences(&a, &b, kmeans_k, &mut rng.derive("kmeans"))?;
    let wasserstein = sliced_wasserstein(&a, &b, cfg.sw_projections, &mut rng.derive("sliced"))?;
    let sinkhorn = sinkhorn_divergence(&a, &b, cfg.sinkhorn_lambda, cfg.sinkhorn_max_iter)?;
    let (precision, recall, f1) = precision_recall_f1(&a, &b, knn_k)?;
    Ok(MetricReport {
        synthetic_count: synthetic.len(),
        private_count: private.len(),
        self_bleu,
        ngram_diversity,
        fid,
        kld,
        tvd,
        wasserstein,
        sinkhorn,
        precision,
        recall,
        f1,
        params: MetricParams {
            bleu_order: cfg.bleu_order,
            ngram_n: cfg.ngram_n,
            kmeans_k,
            sw_projections: cfg.sw_projections,
            sinkhorn_lambda: cfg.sinkhorn_lambda,
            knn_k,
        },
    })
}
