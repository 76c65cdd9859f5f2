//! Checks the internal eigenvalue and log-determinant routines (exercised through
//! the proxies) against nalgebra.

use nalgebra::DMatrix;
use protonas_core::proxies::{meco_tap_score, naswot_from_codes};
use protonas_core::rng::seeded;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_features(rng: &mut impl Rng, c: usize, plane: usize) -> Vec<f64> {
    // Mix a few shared factors in so channels are correlated.
    let factors: Vec<f64> = (0..3 * plane).map(|_| StandardNormal.sample(rng)).collect();
    let mut out = Vec::with_capacity(c * plane);
    for _ in 0..c {
        let w: [f64; 3] = core::array::from_fn(|_| rng.random_range(-1.0..1.0));
        for p in 0..plane {
            let z: f64 = StandardNormal.sample(rng);
            out.push(
                w[0] * factors[p]
                    + w[1] * factors[plane + p]
                    + w[2] * factors[2 * plane + p]
                    + 0.3 * z,
            );
        }
    }
    out
}

#[test]
fn meco_min_eigenvalue_matches_nalgebra() {
    let mut rng = seeded(77);
    for _ in 0..40 {
        let c = rng.random_range(1..40);
        let plane = rng.random_range(2..60);
        let x = random_features(&mut rng, c, plane);
        let ours = meco_tap_score(&x, c, plane, 1e-6);
        let corr = DMatrix::from_fn(c, c, |i, j| {
            let (a, b) = (
                &x[i * plane..(i + 1) * plane],
                &x[j * plane..(j + 1) * plane],
            );
            let ma = a.iter().sum::<f64>() / plane as f64;
            let mb = b.iter().sum::<f64>() / plane as f64;
            let cov: f64 = a
                .iter()
                .zip(b)
                .map(|(u, v)| (u - ma) * (v - mb))
                .sum::<f64>()
                / plane as f64;
            let va = a.iter().map(|u| (u - ma).powi(2)).sum::<f64>() / plane as f64;
            let vb = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / plane as f64;
            cov / (va.max(1e-6) * vb.max(1e-6)).sqrt()
        });
        let want = corr.symmetric_eigenvalues().min();
        assert!(
            (ours - want).abs() < 1e-9,
            "c={c} plane={plane}: {ours} vs {want}"
        );
    }
}

#[test]
fn naswot_log_det_matches_nalgebra() {
    let mut rng = seeded(78);
    for _ in 0..40 {
        let b = rng.random_range(2..12);
        let units = rng.random_range(1..50);
        let codes: Vec<Vec<bool>> = (0..b)
            .map(|_| (0..units).map(|_| rng.random_bool(0.5)).collect())
            .collect();
        let k = DMatrix::from_fn(b, b, |i, j| {
            let ham = codes[i]
                .iter()
                .zip(&codes[j])
                .filter(|(x, y)| x != y)
                .count();
            (units - ham) as f64 + if i == j { 1e-6 } else { 0.0 }
        });
        let want = k.determinant().ln();
        let ours = naswot_from_codes(&codes, 1e-6);
        if want.is_finite() {
            assert!(
                (ours - want).abs() < 1e-6 * want.abs().max(1.0),
                "{ours} vs {want}"
            );
        }
    }
}
