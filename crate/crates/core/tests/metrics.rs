use proptest::prelude::*;

use rpsg_core::metrics::divergence::{kld, tvd};
use rpsg_core::metrics::fid::fid;
use rpsg_core::metrics::lexical::{ngram_diversity, self_bleu};
use rpsg_core::metrics::prf::precision_recall_f1;
use rpsg_core::metrics::sinkhorn::entropic_ot;
use rpsg_core::metrics::wasserstein::{sliced_wasserstein, wasserstein_1d};
use rpsg_core::rng::RngStream;

fn pts(v: &[[f64; 2]]) -> Vec<Vec<f64>> {
    v.iter().map(|p| p.to_vec()).collect()
}

/// Mean and unbiased covariance `[sxx, sxy, syy]` of a 2-D sample.
fn moments2(x: &[Vec<f64>]) -> ([f64; 2], [f64; 3]) {
    let n = x.len() as f64;
    let mx = x.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = x.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut c = [0.0; 3];
    for p in x {
        c[0] += (p[0] - mx) * (p[0] - mx);
        c[1] += (p[0] - mx) * (p[1] - my);
        c[2] += (p[1] - my) * (p[1] - my);
    }
    ([mx, my], c.map(|v| v / (n - 1.0)))
}

/// FID in two dimensions: `Tr√(AB) = sqrt(Tr(AB) + 2·sqrt(det(AB)))` for PSD `A`, `B`.
fn fid2(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (ma, ca) = moments2(a);
    let (mb, cb) = moments2(b);
    let tr_ab = ca[0] * cb[0] + 2.0 * ca[1] * cb[1] + ca[2] * cb[2];
    let det = (ca[0] * ca[2] - ca[1] * ca[1]) * (cb[0] * cb[2] - cb[1] * cb[1]);
    let tr_sqrt = (tr_ab + 2.0 * det.max(0.0).sqrt()).max(0.0).sqrt();
    let diff = (ma[0] - mb[0]).powi(2) + (ma[1] - mb[1]).powi(2);
    diff + ca[0] + ca[2] + cb[0] + cb[2] - 2.0 * tr_sqrt
}

#[test]
fn fid_matches_two_dimensional_closed_form() {
    let a = pts(&[[0.0, 0.0], [1.0, 0.5], [2.0, -1.0], [0.5, 3.0], [-1.0, 1.0]]);
    let b = pts(&[[3.0, 1.0], [2.5, 0.0], [4.0, 2.0], [3.5, -0.5]]);
    assert!((fid(&a, &b).unwrap() - fid2(&a, &b)).abs() < 1e-9);
}

#[test]
fn knn_four_point_fixture() {
    // Unit square as the private manifold; one synthetic point is far off.
    let private = pts(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
    let synthetic = pts(&[[0.5, 0.5], [3.0, 3.0], [1.0, 1.9], [-0.1, 0.0]]);
    let (p, r, f1) = precision_recall_f1(&synthetic, &private, 1).unwrap();
    assert_eq!(p, 0.75);
    assert_eq!(r, 1.0);
    assert!((f1 - 6.0 / 7.0).abs() < 1e-15);
}

/// Precision by enumerating every (probe, manifold-center) pair.
fn coverage_oracle(probe: &[Vec<f64>], manifold: &[Vec<f64>], k: usize) -> f64 {
    let d2 = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum() };
    let mut hits = 0;
    for q in probe {
        let mut inside = false;
        for (i, c) in manifold.iter().enumerate() {
            let mut others: Vec<f64> = (0..manifold.len()).filter(|&j| j != i).map(|j| d2(c, &manifold[j])).collect();
            others.sort_by(|x, y| x.partial_cmp(y).unwrap());
            if d2(q, c) <= others[k - 1] {
                inside = true;
            }
        }
        hits += inside as usize;
    }
    hits as f64 / probe.len() as f64
}

#[test]
fn sinkhorn_two_point_bounds() {
    let a = pts(&[[0.0, 0.0], [1.0, 2.0]]);
    let b = pts(&[[0.5, 0.0], [2.0, 1.5]]);
    let c = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum() };
    // Uniform 2x2 transport: the optimum is one of the two permutations.
    let exact = (0.5 * (c(&a[0], &b[0]) + c(&a[1], &b[1]))).min(0.5 * (c(&a[0], &b[1]) + c(&a[1], &b[0])));
    for lambda in [0.1, 0.01] {
        let v = entropic_ot(&a, &b, lambda, 100_000).unwrap();
        assert!(v >= exact - 1e-9, "lambda={lambda}: {v} < {exact}");
        assert!(v <= exact + lambda * 2f64.ln() + 1e-9, "lambda={lambda}: {v} above bound");
    }
}

fn cloud(max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 4..max)
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..7).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fid_oracle_on_random_clouds(a in cloud(12), b in cloud(12)) {
        let got = fid(&a, &b).unwrap();
        let want = fid2(&a, &b).max(0.0);
        prop_assert!((got - want).abs() <= 1e-7 * (1.0 + want), "{got} vs {want}");
    }

    #[test]
    fn fid_scales_quadratically(a in cloud(10), b in cloud(10), s in 0.1f64..4.0) {
        let scale = |x: &[Vec<f64>]| x.iter().map(|p| p.iter().map(|v| v * s).collect()).collect::<Vec<Vec<f64>>>();
        let base = fid(&a, &b).unwrap();
        let scaled = fid(&scale(&a), &scale(&b)).unwrap();
        prop_assert!((scaled - s * s * base).abs() <= 1e-6 * (1.0 + s * s * base));
    }

    #[test]
    fn prf_matches_enumeration(a in cloud(10), b in cloud(10), k in 1usize..3) {
        let (p, r, f1) = precision_recall_f1(&a, &b, k).unwrap();
        prop_assert_eq!(p, coverage_oracle(&a, &b, k));
        prop_assert_eq!(r, coverage_oracle(&b, &a, k));
        prop_assert!((0.0..=1.0).contains(&f1));
    }

    #[test]
    fn fid_symmetric(a in cloud(10), b in cloud(10)) {
        let (ab, ba) = (fid(&a, &b).unwrap(), fid(&b, &a).unwrap());
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab));
    }

    #[test]
    fn prf_permutation_invariant(a in cloud(10), b in cloud(10)) {
        let mut ra = a.clone();
        ra.reverse();
        prop_assert_eq!(precision_recall_f1(&a, &b, 2).unwrap(), precision_recall_f1(&ra, &b, 2).unwrap());
    }

    #[test]
    fn sliced_w1_scale_and_permutation(a in cloud(10), b in cloud(10), s in 0.1f64..4.0) {
        let base = sliced_wasserstein(&a, &b, 16, &mut RngStream::new(1, "sw")).unwrap();
        prop_assert!(base >= 0.0);
        let scale = |x: &[Vec<f64>]| x.iter().map(|p| p.iter().map(|v| v * s).collect()).collect::<Vec<Vec<f64>>>();
        let scaled = sliced_wasserstein(&scale(&a), &scale(&b), 16, &mut RngStream::new(1, "sw")).unwrap();
        prop_assert!((scaled - s * base).abs() <= 1e-9 * (1.0 + s * base));
        let mut ra = a.clone();
        ra.reverse();
        let permuted = sliced_wasserstein(&ra, &b, 16, &mut RngStream::new(1, "sw")).unwrap();
        prop_assert!((permuted - base).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn w1_of_a_shift_is_the_shift(xs in prop::collection::vec(-10.0f64..10.0, 1..20), t in -5.0f64..5.0) {
        let ys: Vec<f64> = xs.iter().map(|x| x + t).collect();
        prop_assert!((wasserstein_1d(&xs, &ys).unwrap() - t.abs()).abs() < 1e-9);
    }

    #[test]
    fn histogram_divergence_ranges(p in prop::collection::vec(0.01f64..1.0, 2..8), q in prop::collection::vec(0.01f64..1.0, 2..8)) {
        let n = p.len().min(q.len());
        let norm = |v: &[f64]| { let s: f64 = v[..n].iter().sum(); v[..n].iter().map(|x| x / s).collect::<Vec<_>>() };
        let (p, q) = (norm(&p), norm(&q));
        prop_assert!(kld(&p, &q) >= -1e-12);
        let t = tvd(&p, &q);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&t));
        prop_assert_eq!(t, tvd(&q, &p));
        prop_assert!(kld(&p, &p).abs() < 1e-12 && tvd(&p, &p) == 0.0);
    }

    #[test]
    fn self_bleu_invariant_to_relabeling(texts in prop::collection::vec(sentence(), 2..6)) {
        let relabel = |t: &String| t.split(' ').map(|w| format!("{w}{w}x")).collect::<Vec<_>>().join(" ");
        let renamed: Vec<String> = texts.iter().map(relabel).collect();
        let a = self_bleu(&texts, 4).unwrap();
        prop_assert_eq!(a, self_bleu(&renamed, 4).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn self_bleu_permutation_invariant(texts in prop::collection::vec(sentence(), 2..6)) {
        let mut rev = texts.clone();
        rev.reverse();
        let (a, b) = (self_bleu(&texts, 4).unwrap(), self_bleu(&rev, 4).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn diversity_in_unit_range(texts in prop::collection::vec(sentence(), 1..6)) {
        if let Ok(d) = ngram_diversity(&texts, 2) {
            prop_assert!(d > 0.0 && d <= 1.0);
        }
    }
}
