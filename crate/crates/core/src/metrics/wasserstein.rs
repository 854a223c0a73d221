use rand_distr::{Distribution, StandardNormal};

use super::fid::check_sets;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Exact W₁ between two 1-D empirical distributions: ∫|F_A − F_B|.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("W1 of an empty sample"));
    }
    let mut xs: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    xs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut ca, mut cb) = (0usize, 0usize);
    let mut total = 0.0;
    for w in 0..xs.len() {
        if xs[w].1 {
            ca += 1;
        } else {
            cb += 1;
        }
        if let Some(next) = xs.get(w + 1) {
            total += (ca as f64 / na - cb as f64 / nb).abs() * (next.0 - xs[w].0);
        }
    }
    Ok(total)
}

/// Random unit directions from normalized Gaussian draws.
pub fn projections(dim: usize, count: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                break v.into_iter().map(|x| x / n).collect();
            }
        })
        .collect()
}

/// Sliced W₁: mean 1-D W₁ over `count` seeded random projections.
pub fn sliced_wasserstein(a: &[Vec<f64>], b: &[Vec<f64>], count: usize, rng: &mut RngStream) -> Result<f64> {
    let d = check_sets(a, b)?;
    if count == 0 {
        return Err(Error::invalid("need at least one projection"));
    }
    let dirs = projections(d, count, rng);
    let project = |set: &[Vec<f64>], u: &[f64]| -> Vec<f64> {
        set.iter().map(|v| v.iter().zip(u).map(|(x, y)| x * y).sum()).collect()
    };
    let mut total = 0.0;
    for u in &dirs {
        total += wasserstein_1d(&project(a, u), &project(b, u))?;
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn one_dimensional_cases() {
        let mut r = RngStream::new(0, "sw");
        assert_eq!(sliced_wasserstein(&line(&[0.0]), &line(&[1.0]), 1, &mut r).unwrap(), 1.0);
        assert_eq!(sliced_wasserstein(&line(&[0.0, 2.0]), &line(&[1.0, 3.0]), 1, &mut r).unwrap(), 1.0);
        let a = line(&[0.3, -1.0, 4.0]);
        assert!(sliced_wasserstein(&a, &a, 8, &mut r).unwrap() < 1e-9);
    }

    #[test]
    fn unequal_sizes() {
        // {0} vs {0, 1}: half the mass moves distance 1.
        assert!((wasserstein_1d(&[0.0], &[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn projections_are_unit() {
        for p in projections(5, 10, &mut RngStream::new(1, "p")) {
            assert!((p.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
