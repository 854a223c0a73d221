//! Cluster-histogram KLD and TVD on a k-means partition of both sets.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::fid::check_sets;
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const KMEANS_MAX_ITER: usize = 100;
pub const HIST_EPSILON: f64 = 1e-6;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// k-means++ seeding then Lloyd iterations. Returns the centers.
pub fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
    if k < 2 {
        return Err(Error::invalid("k-means needs k >= 2"));
    }
    if points.len() < k {
        return Err(Error::invalid(format!("k-means with k={k} on {} points", points.len())));
    }
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // Fewer distinct points than k: any point will do.
            Err(_) => rng.random_range(0..points.len()),
        };
        centers.push(points[next].clone());
        let c = centers.last().expect("just pushed");
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    let dim = points[0].len();
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    Ok(centers)
}

/// Cluster frequencies with `HIST_EPSILON` added to every bin, renormalized.
pub fn histogram(points: &[Vec<f64>], centers: &[Vec<f64>]) -> Vec<f64> {
    let k = centers.len();
    let mut h = vec![0.0; k];
    for p in points {
        h[nearest(p, centers)] += 1.0;
    }
    let n = points.len() as f64;
    let z = 1.0 + k as f64 * HIST_EPSILON;
    h.iter().map(|c| (c / n + HIST_EPSILON) / z).collect()
}

pub fn kld(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0)
}

pub fn tvd(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `(KLD(P_A‖P_B), TVD)` over a k-means fit on `A ∪ B`.
///
/// The union is sorted before clustering so the result does not depend on
/// record order.
pub fn histogram_divergences(a: &[Vec<f64>], b: &[Vec<f64>], k: usize, rng: &mut RngStream) -> Result<(f64, f64)> {
    check_sets(a, b)?;
    if k < 2 {
        return Err(Error::invalid("cluster count must be at least 2"));
    }
    if a.len() < k {
        return Err(Error::invalid(format!("cluster count {k} exceeds set size {}", a.len())));
    }
    let mut union: Vec<Vec<f64>> = a.iter().chain(b).cloned().collect();
    union.sort_by(|x, y| {
        x.iter()
            .zip(y)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let centers = kmeans(&union, k, rng)?;
    let pa = histogram(a, &centers);
    let pb = histogram(b, &centers);
    Ok((kld(&pa, &pb), tvd(&pa, &pb)))
}
