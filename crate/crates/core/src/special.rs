//! Normal-distribution helpers that stay finite far into the tails.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument `Φ` is evaluated through its asymptotic series.
const TAIL: f64 = -37.0;

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF `Φ(z)`.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// `log Φ(z)`.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z < TAIL {
        // log Φ(z) = log φ(z) − log(−z) + log(1 − 1/z² + 3/z⁴ − 15/z⁶)
        let z2 = z * z;
        -0.5 * z2 - LN_SQRT_2PI - (-z).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)).ln()
    } else if z > 5.0 {
        // Φ(z) = 1 − Φ(−z), and Φ(−z) is tiny.
        (-norm_cdf(-z)).ln_1p()
    } else {
        norm_cdf(z).ln()
    }
}

/// `φ(z) / Φ(z)`, the derivative of `log Φ`.
pub fn inv_mills(z: f64) -> f64 {
    if z < TAIL {
        // Ratio of the asymptotic expansions of φ and Φ.
        let z2 = z * z;
        -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2))
    } else {
        (-0.5 * z * z - LN_SQRT_2PI - log_norm_cdf(z)).exp()
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
