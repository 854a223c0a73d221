//! Membership-inference evaluation on the count surrogate.

use std::collections::HashSet;
use std::path::PathBuf;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{sample_seeds, Corpus, CorpusRecord};
use crate::error::{ConfigViolation, Error, Result};
use crate::rng::RngStream;
use crate::surrogate::{NgramModel, SequenceScorer, SurrogateConfig};

/// Public text used to train the REFER reference model by default.
pub const REFERENCE_CORPUS: &str = include_str!("../data/reference_corpus.txt");

pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MemberSpec {
    Count(usize),
    Fraction(f64),
}

impl MemberSpec {
    pub fn resolve(self, corpus_len: usize) -> Result<usize> {
        match self {
            MemberSpec::Count(n) => Ok(n),
            MemberSpec::Fraction(f) if f > 0.0 && f < 1.0 => Ok(((corpus_len as f64 * f).floor() as usize).max(1)),
            MemberSpec::Fraction(f) => Err(Error::invalid(format!("member fraction {f} outside (0, 1)"))),
        }
    }
}

impl std::str::FromStr for MemberSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains('.') {
            s.parse::<f64>()
                .map(MemberSpec::Fraction)
                .map_err(|_| Error::invalid(format!("bad member fraction `{s}`")))
        } else {
            s.parse::<usize>()
                .map(MemberSpec::Count)
                .map_err(|_| Error::invalid(format!("bad member count `{s}`")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiaConfig {
    /// Defaults to the pipeline's seed count when unset.
    pub members: Option<MemberSpec>,
    pub shadows: usize,
    pub shadow_fraction: f64,
    /// Equal member and nonmember counts.
    pub balanced: bool,
    /// Overrides the bundled reference corpus (one text per line).
    pub reference: Option<PathBuf>,
}

impl Default for MiaConfig {
    fn default() -> Self {
        Self {
            members: None,
            shadows: 8,
            shadow_fraction: 0.5,
            balanced: true,
            reference: None,
        }
    }
}

impl MiaConfig {
    pub fn violations(&self) -> Vec<ConfigViolation> {
        let mut v = Vec::new();
        let mut bad = |key: &str, constraint: &str| {
            v.push(ConfigViolation {
                key: format!("[mia].{key}"),
                constraint: constraint.to_string(),
            })
        };
        if self.shadows < 4 {
            bad("shadows", "must be at least 4");
        }
        if !(self.shadow_fraction > 0.0 && self.shadow_fraction <= 1.0) {
            bad("shadow_fraction", "must lie in (0, 1]");
        }
        match self.members {
            Some(MemberSpec::Count(0)) => bad("members", "must be at least 1"),
            Some(MemberSpec::Fraction(f)) if !(f > 0.0 && f < 1.0) => bad("members", "fraction must lie in (0, 1)"),
            _ => {}
        }
        if let Some(p) = &self.reference {
            if !p.exists() {
                bad("reference", "file does not exist");
            }
        }
        v
    }

    pub fn reference_texts(&self) -> Result<Vec<String>> {
        let raw = match &self.reference {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => REFERENCE_CORPUS.to_string(),
        };
        Ok(raw.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipSplit {
    pub members: Vec<CorpusRecord>,
    pub nonmembers: Vec<CorpusRecord>,
    pub seed: u64,
}

/// Members are drawn exactly as pipeline seeds are (same sampler, same
/// stream), so a split built from the pipeline's seed stream reproduces its
/// seed set. Nonmembers come from the rest, excluding any text a member has.
pub fn make_split(private: &Corpus, member_count: usize, balanced: bool, rng: &mut RngStream) -> Result<MembershipSplit> {
    if member_count == 0 || member_count >= private.len() {
        return Err(Error::invalid(format!(
            "member count {member_count} must be in 1..{} for a corpus of {}",
            private.len(),
            private.len()
        )));
    }
    let members = sample_seeds(private, member_count, rng)?.into_records();
    let ids: HashSet<&str> = members.iter().map(|r| r.id.as_str()).collect();
    let texts: HashSet<&str> = members.iter().map(|r| r.text.as_str()).collect();
    let rest: Vec<&CorpusRecord> = private
        .iter()
        .filter(|r| !ids.contains(r.id.as_str()) && !texts.contains(r.text.as_str()))
        .collect();
    if rest.is_empty() {
        return Err(Error::invalid("no nonmember records remain after the split"));
    }
    let nonmembers = if balanced {
        let k = member_count.min(rest.len());
        let mut picked: Vec<usize> = index::sample(rng, rest.len(), k).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| rest[i].clone()).collect()
    } else {
        rest.into_iter().cloned().collect()
    };
    Ok(MembershipSplit {
        members,
        nonmembers,
        seed: rng.seed(),
    })
}

/// Twice the Mann–Whitney U statistic of `members` over `nonmembers`,
/// and the pair count. Integral, so complementary orderings sum exactly.
pub fn mann_whitney_u2(members: &[f64], nonmembers: &[f64]) -> Result<(u128, u128)> {
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::invalid("AUC needs non-empty score lists"));
    }
    if members.iter().chain(nonmembers).any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN membership score"));
    }
    let mut all: Vec<(f64, bool)> = members
        .iter()
        .map(|&s| (s, true))
        .chain(nonmembers.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Doubled midranks (1-based) keep the tie halves integral.
    let mut rank2_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid2 = (i + 1 + j) as u128;
        rank2_sum += mid2 * all[i..j].iter().filter(|x| x.1).count() as u128;
        i = j;
    }
    let (n1, n2) = (members.len() as u128, nonmembers.len() as u128);
    Ok((rank2_sum - n1 * (n1 + 1), n1 * n2))
}

/// Share of (member, nonmember) pairs where the member scores higher, ties
/// counting one half.
pub fn auc(members: &[f64], nonmembers: &[f64]) -> Result<f64> {
    let (u2, pairs) = mann_whitney_u2(members, nonmembers)?;
    Ok(u2 as f64 / (2 * pairs) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Attack {
    Ppl,
    Refer,
    Lira,
}

impl Attack {
    pub fn name(self) -> &'static str {
        match self {
            Attack::Ppl => "PPL",
            Attack::Refer => "REFER",
            Attack::Lira => "LIRA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub attack: Attack,
    pub member_scores: Vec<f64>,
    pub nonmember_scores: Vec<f64>,
    pub auc: f64,
}

impl AttackResult {
    fn new(attack: Attack, member_scores: Vec<f64>, nonmember_scores: Vec<f64>) -> Result<Self> {
        let auc = auc(&member_scores, &nonmember_scores)?;
        Ok(Self {
            attack,
            member_scores,
            nonmember_scores,
            auc,
        })
    }
}

fn scores(records: &[CorpusRecord], f: impl Fn(&str) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    records.par_iter().map(|r| f(&r.text)).collect()
}

pub fn attack_ppl(target: &dyn SequenceScorer, split: &MembershipSplit) -> Result<AttackResult> {
    let f = |t: &str| target.perplexity(t).map(|p| -p);
    AttackResult::new(Attack::Ppl, scores(&split.members, f)?, scores(&split.nonmembers, f)?)
}

pub fn attack_refer(target: &dyn SequenceScorer, reference: &dyn SequenceScorer, split: &MembershipSplit) -> Result<AttackResult> {
    let f = |t: &str| Ok(-(target.nll(t)? - reference.nll(t)?));
    AttackResult::new(Attack::Refer, scores(&split.members, f)?, scores(&split.nonmembers, f)?)
}

/// Offline shadow-model likelihood ratio: `z = (μ_shadow − nll_target) / σ_shadow`.
pub fn attack_lira(
    target: &dyn SequenceScorer,
    synthetic: &[String],
    split: &MembershipSplit,
    shadows: usize,
    shadow_fraction: f64,
    surrogate: &SurrogateConfig,
    rng: &RngStream,
) -> Result<AttackResult> {
    if shadows < 4 {
        return Err(Error::invalid("LIRA needs at least 4 shadow models"));
    }
    if !(shadow_fraction > 0.0 && shadow_fraction <= 1.0) {
        return Err(Error::invalid("shadow fraction must lie in (0, 1]"));
    }
    let take = ((synthetic.len() as f64 * shadow_fraction).floor() as usize).max(1);
    if shadow_fraction < 1.0 && take >= synthetic.len() {
        return Err(Error::invalid("synthetic corpus too small to subsample for shadow models"));
    }
    let models: Vec<NgramModel> = (0..shadows)
        .into_par_iter()
        .map(|s| {
            let mut r = rng.derive(&format!("shadow-{s}"));
            let mut idx = index::sample(&mut r, synthetic.len(), take).into_vec();
            idx.sort_unstable();
            let sub: Vec<&str> = idx.iter().map(|&i| synthetic[i].as_str()).collect();
            NgramModel::train(&sub, surrogate)
        })
        .collect::<Result<_>>()?;

    let probe = |t: &str| -> Result<(f64, f64)> {
        let nll: Vec<f64> = models.iter().map(|m| m.nll(t)).collect::<Result<_>>()?;
        let mu = nll.iter().sum::<f64>() / nll.len() as f64;
        let var = nll.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (nll.len() - 1) as f64;
        let sd = var.sqrt();
        Ok(((mu - target.nll(t)?) / sd.max(SIGMA_FLOOR), sd))
    };
    let m: Vec<(f64, f64)> = split.members.par_iter().map(|r| probe(&r.text)).collect::<Result<_>>()?;
    let n: Vec<(f64, f64)> = split.nonmembers.par_iter().map(|r| probe(&r.text)).collect::<Result<_>>()?;
    if shadow_fraction < 1.0 && m.iter().chain(&n).all(|(_, sd)| *sd == 0.0) {
        return Err(Error::DegenerateShadows);
    }
    AttackResult::new(
        Attack::Lira,
        m.into_iter().map(|x| x.0).collect(),
        n.into_iter().map(|x| x.0).collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiaReport {
    pub members: usize,
    pub nonmembers: usize,
    pub shadows: usize,
    pub shadow_fraction: f64,
    pub target_fingerprint: String,
    pub reference_fingerprint: String,
    pub attacks: Vec<AttackResult>,
}

/// Trains the target on `synthetic` and runs all three attacks.
pub fn run_attacks(
    synthetic: &[String],
    split: &MembershipSplit,
    surrogate: &SurrogateConfig,
    cfg: &MiaConfig,
    rng: &RngStream,
) -> Result<MiaReport> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    let target = NgramModel::train(synthetic, surrogate)?;
    let reference = NgramModel::train(&cfg.reference_texts()?, surrogate)?;
    let attacks = vec![
        attack_ppl(&target, split)?,
        attack_refer(&target, &reference, split)?,
        attack_lira(&target, synthetic, split, cfg.shadows, cfg.shadow_fraction, surrogate, &rng.derive("lira"))?,
    ];
    Ok(MiaReport {
        members: split.members.len(),
        nonmembers: split.nonmembers.len(),
        shadows: cfg.shadows,
        shadow_fraction: cfg.shadow_fraction,
        target_fingerprint: target.fingerprint().to_string(),
        reference_fingerprint: reference.fingerprint().to_string(),
        attacks,
    })
}
