//! Seeded synthetic datasets used by the demos, benchmarks and tests.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson, StandardNormal};

/// `n` points with `x ~ U(0, 2π)` and `y = sin(x) + noise_sd · ε`.
pub fn sin_data(n: usize, noise_sd: f64, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(1, n, |_, _| 2.0 * PI * rng.random::<f64>());
    let y = DVector::from_fn(n, |i, _| x[(0, i)].sin() + noise_sd * rng.sample::<f64, _>(StandardNormal));
    (x, y)
}

/// `|x − 5| cos(2x)`.
pub fn sparse_demo_truth(x: f64) -> f64 {
    (x - 5.0).abs() * (2.0 * x).cos()
}

/// `x = 10 · Beta(7, 7)`, `y = |x − 5| cos(2x) + N(0, noise_sd²)`.
pub fn sparse_demo_data(n: usize, noise_sd: f64, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = Beta::new(7.0, 7.0).expect("valid shape parameters");
    let noise = Normal::new(0.0, noise_sd).expect("finite noise scale");
    let x = DMatrix::from_fn(1, n, |_, _| 10.0 * beta.sample(&mut rng));
    let y = DVector::from_fn(n, |i, _| sparse_demo_truth(x[(0, i)]) + noise.sample(&mut rng));
    (x, y)
}

/// Sample quantiles with linear interpolation between order statistics
/// (the `(n − 1)p` rule).
pub fn quantiles(values: &[f64], probs: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    probs
        .iter()
        .map(|&p| {
            let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect()
}

/// Probabilities at which the sparse demo places its inducing points.
pub const SPARSE_DEMO_QUANTILES: [f64; 12] = [0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.98];

/// `d × n` standard-normal covariates and standard-normal responses.
pub fn bench_data(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(d, n, |_, _| rng.sample(StandardNormal));
    let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    (x, y)
}

/// Poisson counts over `bins` unit time bins whose rate drops from
/// `rate_before` to `rate_after` at the midpoint.
pub fn two_regime_counts(bins: usize, rate_before: f64, rate_after: f64, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let before = Poisson::new(rate_before).expect("positive rate");
    let after = Poisson::new(rate_after).expect("positive rate");
    let x = DMatrix::from_fn(1, bins, |_, j| j as f64);
    let y = DVector::from_fn(bins, |i, _| if i < bins / 2 { before.sample(&mut rng) } else { after.sample(&mut rng) });
    (x, y)
}
