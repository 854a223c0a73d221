//! k-NN manifold precision and recall.

use rayon::prelude::*;

use super::fid::check_sets;
use crate::error::{Error, Result};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance from each point to its k-th nearest other point.
pub fn knn_radii(set: &[Vec<f64>], k: usize) -> Vec<f64> {
    set.par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = set
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| sq_dist(p, q))
                .collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect()
}

/// Fraction of `probe` points inside at least one k-NN ball of `manifold`.
pub fn coverage(probe: &[Vec<f64>], manifold: &[Vec<f64>], radii: &[f64]) -> f64 {
    let hit = probe
        .par_iter()
        .filter(|p| manifold.iter().zip(radii).any(|(m, &r)| sq_dist(p, m) <= r))
        .count();
    hit as f64 / probe.len() as f64
}

/// `(precision, recall, f1)` of `synthetic` against `private`.
pub fn precision_recall_f1(synthetic: &[Vec<f64>], private: &[Vec<f64>], k: usize) -> Result<(f64, f64, f64)> {
    check_sets(synthetic, private)?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if synthetic.len() <= k || private.len() <= k {
        return Err(Error::invalid(format!("k-NN with k={k} needs more than {k} points per set")));
    }
    let p = coverage(synthetic, private, &knn_radii(private, k));
    let r = coverage(private, synthetic, &knn_radii(synthetic, k));
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok((p, r, f1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sets() {
        let a = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, 3.0]];
        assert_eq!(precision_recall_f1(&a, &a, 2).unwrap(), (1.0, 1.0, 1.0));
    }

    #[test]
    fn far_apart() {
        let a = vec![vec![0.0], vec![0.1], vec![0.2]];
        let b = vec![vec![100.0], vec![100.1], vec![100.2]];
        assert_eq!(precision_recall_f1(&a, &b, 1).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn too_small() {
        let a = vec![vec![0.0], vec![1.0]];
        assert!(precision_recall_f1(&a, &a, 2).is_err());
    }
}
