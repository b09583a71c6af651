//! Gauss-Hermite quadrature against the standard normal density.
//!
//! Nodes start from the eigenvalues of the symmetric Jacobi matrix of the
//! probabilists' Hermite recurrence (Golub-Welsch), are polished by Newton
//! steps on the orthonormal polynomial, and the weights come from the
//! closed form `w_i = 1 / (n p_{n-1}(x_i)²)`, which keeps full relative
//! accuracy in the tails where eigenvector-based weights lose digits.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

/// Nodes and weights of an `n`-point rule for `E[g(Z)]`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Rule with `order` nodes, cached per order for the process lifetime.
    pub fn new(order: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let order = order.max(1);
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard.entry(order).or_insert_with(|| Arc::new(compute(order))).clone()
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `E[g(μ + σ Z)]`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mean: f64, sd: f64, mut g: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * g(mean + sd * z)).sum()
    }
}

/// Orthonormal Hermite values `(p_n(x), p_{n-1}(x))`.
fn orthonormal(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

fn compute(n: usize) -> GaussHermite {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    let nf = n as f64;
    for x in nodes.iter_mut() {
        for _ in 0..8 {
            let (pn, pm) = orthonormal(n, *x);
            let step = pn / (nf.sqrt() * pm);
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }
    // The rule is symmetric; enforce it exactly so odd moments vanish.
    for i in 0..n / 2 {
        let a = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -a;
        nodes[n - 1 - i] = a;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }

    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let (_, pm) = orthonormal(n, x);
            1.0 / (nf * pm * pm)
        })
        .collect();
    for i in 0..n / 2 {
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    GaussHermite { nodes, weights }
}
