//! Gaussian-mechanism candidate selection.
//!
//! Each seed's candidates carry a bounded utility `u ∈ [0,1]` (normalized
//! cosine similarity to the seed). Independent `N(0, σ²)` noise is added to
//! every utility and the noisy argmax is released.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Privacy parameters with the derived noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    /// `f64::INFINITY` means no noise.
    #[serde(with = "epsilon_serde")]
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
    pub sigma: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64, sensitivity: f64) -> Result<Self> {
        if !(epsilon > 0.0) || epsilon.is_nan() {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0,1), got {delta}")));
        }
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(Error::invalid(format!("sensitivity must be positive, got {sensitivity}")));
        }
        let sigma = if epsilon.is_infinite() {
            0.0
        } else {
            compute_sigma(epsilon, delta, sensitivity)?
        };
        Ok(Self {
            epsilon,
            delta,
            sensitivity,
            sigma,
        })
    }

    /// Parameters with δ derived from the private corpus size.
    pub fn for_corpus(epsilon: f64, n_priv: usize, sensitivity: f64) -> Result<Self> {
        Self::new(epsilon, compute_delta(n_priv)?, sensitivity)
    }
}

pub mod epsilon_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            Repr::Text("inf".into()).serialize(s)
        } else {
            Repr::Num(*v).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t.eq_ignore_ascii_case("inf") => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad epsilon {t:?}"))),
        }
    }
}

/// `δ = 1 / (N · ln N)`.
pub fn compute_delta(n_priv: usize) -> Result<f64> {
    if n_priv < 3 {
        return Err(Error::invalid(format!(
            "delta needs a private corpus of at least 3 records, got {n_priv}"
        )));
    }
    let n = n_priv as f64;
    Ok(1.0 / (n * n.ln()))
}

/// `σ = sqrt(2 ln(1.25/δ)) · Δu / ε`.
pub fn compute_sigma(epsilon: f64, delta: f64, sensitivity: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0,1), got {delta}")));
    }
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(Error::invalid(format!("sensitivity must be positive, got {sensitivity}")));
    }
    if epsilon > 1.0 {
        log::warn!(
            "epsilon = {epsilon} > 1: the classical Gaussian mechanism calibration is stated for epsilon <= 1"
        );
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt() * sensitivity / epsilon)
}

/// Affine map of a cosine in `[-1,1]` onto `[0,1]`.
pub fn normalize_similarity(cos: f64) -> f64 {
    ((cos + 1.0) / 2.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyUtility {
    pub index: usize,
    pub u: f64,
    pub eta: f64,
    pub u_tilde: f64,
}

/// Noisy scores for every candidate. With `sigma == 0` no draws are made and
/// `eta` is exactly zero.
pub fn noisy_utilities(utilities: &[f64], sigma: f64, rng: &mut RngStream) -> Result<Vec<NoisyUtility>> {
    if utilities.is_empty() {
        return Err(Error::invalid("noisy selection over an empty candidate list"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be finite and non-negative, got {sigma}")));
    }
    Ok(utilities
        .iter()
        .enumerate()
        .map(|(index, &u)| {
            let eta = if sigma == 0.0 {
                0.0
            } else {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            };
            NoisyUtility {
                index,
                u,
                eta,
                u_tilde: u + eta,
            }
        })
        .collect())
}

/// Index of the largest value; lowest index on exact ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

pub fn noisy_select(utilities: &[f64], sigma: f64, rng: &mut RngStream) -> Result<usize> {
    let noisy = noisy_utilities(utilities, sigma, rng)?;
    Ok(argmax(noisy.iter().map(|n| n.u_tilde)).expect("non-empty"))
}

/// Per-selection privacy receipt. Guarantees are per selection only; no
/// composition across seeds is claimed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReceipt {
    pub seed_id: String,
    pub selected: usize,
    pub candidates: usize,
    #[serde(with = "epsilon_serde")]
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
}

/// One seed's candidate utilities, already normalized to `[0,1]`.
#[derive(Debug, Clone)]
pub struct SeedCandidates {
    pub seed_id: String,
    pub utilities: Vec<f64>,
}

/// Selects one candidate per seed. Each seed draws from its own substream,
/// so results do not depend on processing order.
pub fn select_for_corpus(
    seeds: &[SeedCandidates],
    params: &PrivacyParams,
    rng: &RngStream,
) -> Result<Vec<SelectionReceipt>> {
    seeds
        .iter()
        .map(|s| {
            if s.utilities.iter().any(|u| !(0.0..=1.0).contains(u)) {
                return Err(Error::invalid(format!("utility outside [0,1] for seed {}", s.seed_id)));
            }
            let mut sub = rng.derive(&s.seed_id);
            let selected =
                noisy_select(&s.utilities, params.sigma, &mut sub).map_err(|e| e.in_stage("dp-select", &s.seed_id))?;
            Ok(SelectionReceipt {
                seed_id: s.seed_id.clone(),
                selected,
                candidates: s.utilities.len(),
                epsilon: params.epsilon,
                delta: params.delta,
                sigma: params.sigma,
            })
        })
        .collect()
}
