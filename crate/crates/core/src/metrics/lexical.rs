//! Self-BLEU and distinct-n over whitespace tokens.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::text::tokenize;

fn encode(texts: &[String]) -> Vec<Vec<u32>> {
    let mut vocab: HashMap<String, u32> = HashMap::new();
    texts
        .iter()
        .map(|t| {
            tokenize(t)
                .into_iter()
                .map(|w| {
                    let next = vocab.len() as u32;
                    *vocab.entry(w).or_insert(next)
                })
                .collect()
        })
        .collect()
}

fn ngram_counts(toks: &[u32], n: usize) -> HashMap<&[u32], u32> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for g in toks.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

/// Largest and second-largest count of an n-gram, with the owner of the largest.
#[derive(Clone, Copy, Default)]
struct Top2 {
    best: u32,
    owner: usize,
    second: u32,
}

impl Top2 {
    fn push(&mut self, count: u32, owner: usize) {
        if count > self.best {
            self.second = self.best;
            self.best = count;
            self.owner = owner;
        } else if count > self.second {
            self.second = count;
        }
    }

    fn excluding(&self, who: usize) -> u32 {
        if self.owner == who {
            self.second
        } else {
            self.best
        }
    }
}

/// Reference length closest to `c`, shorter on ties, skipping one copy of `own`.
fn closest_ref_len(lengths: &BTreeMap<usize, usize>, own: usize, c: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (&len, &cnt) in lengths {
        let avail = if len == own { cnt - 1 } else { cnt };
        if avail == 0 {
            continue;
        }
        best = match best {
            None => Some(len),
            Some(b) if len.abs_diff(c) < b.abs_diff(c) => Some(len),
            keep => keep,
        };
    }
    best
}

/// Mean BLEU of each record against all others as references.
///
/// Orders the hypothesis is too short for are left out of the geometric
/// mean; an order with zero clipped matches counts as `1/(total+1)`.
pub fn self_bleu(texts: &[String], max_order: usize) -> Result<f64> {
    if texts.len() < 2 {
        return Err(Error::invalid("self-BLEU needs at least two records"));
    }
    if max_order == 0 {
        return Err(Error::invalid("BLEU order must be at least 1"));
    }
    let docs = encode(texts);
    let counts: Vec<Vec<HashMap<&[u32], u32>>> = docs
        .iter()
        .map(|d| (1..=max_order).map(|n| ngram_counts(d, n)).collect())
        .collect();
    let mut tops: Vec<HashMap<&[u32], Top2>> = vec![HashMap::new(); max_order];
    for (i, per_order) in counts.iter().enumerate() {
        for (o, m) in per_order.iter().enumerate() {
            for (g, &c) in m {
                tops[o].entry(*g).or_default().push(c, i);
            }
        }
    }
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    for d in &docs {
        *lengths.entry(d.len()).or_default() += 1;
    }

    let mut total = 0.0;
    for (i, d) in docs.iter().enumerate() {
        let c = d.len();
        if c == 0 {
            continue;
        }
        let mut log_sum = 0.0;
        let mut orders = 0usize;
        for o in 0..max_order {
            let t = c.saturating_sub(o);
            if t == 0 {
                continue;
            }
            let clipped: u64 = counts[i][o]
                .iter()
                .map(|(g, &cnt)| cnt.min(tops[o][g].excluding(i)) as u64)
                .sum();
            let p = if clipped == 0 {
                1.0 / (t as f64 + 1.0)
            } else {
                clipped as f64 / t as f64
            };
            log_sum += p.ln();
            orders += 1;
        }
        let r = closest_ref_len(&lengths, c, c).expect("at least one other record");
        let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
        total += bp * (log_sum / orders as f64).exp();
    }
    Ok(total / docs.len() as f64)
}

/// Distinct n-grams over total n-grams, pooled over the corpus.
pub fn ngram_diversity(texts: &[String], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    let docs = encode(texts);
    let mut distinct = HashSet::new();
    let mut total = 0usize;
    for d in &docs {
        if d.len() >= n {
            for g in d.windows(n) {
                distinct.insert(g);
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::invalid(format!("no record has {n} or more tokens")));
    }
    Ok(distinct.len() as f64 / total as f64)
}
