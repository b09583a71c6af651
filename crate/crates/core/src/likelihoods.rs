//! Observation models `p(y | f, θ)` for the Monte Carlo GP.

use std::fmt;

use libm::lgamma;

use crate::error::{GpError, Result};
use crate::quadrature::GaussHermite;
use crate::special::{inv_mills, log_norm_cdf, logistic, norm_cdf, softplus, LN_SQRT_2PI};

/// Gauss-Hermite order used when none is given.
pub const DEFAULT_QUAD_ORDER: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum Likelihood {
    /// `y ∈ {0, 1}`, probit link `Φ(f)`.
    Bernoulli,
    /// `y ∈ {0..trials}`, logit link.
    Binomial { trials: u32 },
    /// `y > 0`, rate `exp(−f)`.
    Exponential,
    Gaussian { log_sigma: f64 },
    /// `y ∈ ℕ₀`, rate `exp(f)`.
    Poisson,
    /// Location `f`, scale `σ`, fixed degrees of freedom `nu`.
    StudentT { nu: f64, log_sigma: f64 },
    /// Improper `p(y | f) = 1`: the posterior equals the prior. Used to
    /// sample the prior with the same machinery.
    Flat,
}

impl Likelihood {
    pub fn type_name(&self) -> &'static str {
        match self {
            Likelihood::Bernoulli => "BernLik",
            Likelihood::Binomial { .. } => "BinLik",
            Likelihood::Exponential => "ExpLik",
            Likelihood::Gaussian { .. } => "GaussLik",
            Likelihood::Poisson => "PoisLik",
            Likelihood::StudentT { .. } => "StuTLik",
            Likelihood::Flat => "FlatLik",
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Likelihood::Gaussian { .. } | Likelihood::StudentT { .. } => 1,
            _ => 0,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Likelihood::Gaussian { log_sigma } | Likelihood::StudentT { log_sigma, .. } => vec![*log_sigma],
            _ => vec![],
        }
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(GpError::config(format!(
                "likelihood expects {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        if let Likelihood::Gaussian { log_sigma } | Likelihood::StudentT { log_sigma, .. } = self {
            *log_sigma = params[0];
        }
        Ok(())
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            Likelihood::Gaussian { .. } | Likelihood::StudentT { .. } => vec!["Lik log scale".into()],
            _ => vec![],
        }
    }

    /// Checks `y` against the likelihood's response type.
    pub fn check_response(&self, y: f64) -> Result<()> {
        let ok = match self {
            Likelihood::Bernoulli => y == 0.0 || y == 1.0,
            Likelihood::Binomial { trials } => y >= 0.0 && y <= f64::from(*trials) && y.fract() == 0.0,
            Likelihood::Exponential => y > 0.0 && y.is_finite(),
            Likelihood::Poisson => y >= 0.0 && y.fract() == 0.0 && y.is_finite(),
            Likelihood::Gaussian { .. } | Likelihood::StudentT { .. } | Likelihood::Flat => y.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(GpError::input(format!("response {y} is outside the support of {}", self.type_name())))
        }
    }

    /// `log p(y | f)`.
    pub fn log_density(&self, y: f64, f: f64) -> Result<f64> {
        self.check_response(y)?;
        Ok(self.log_density_unchecked(y, f))
    }

    pub(crate) fn log_density_unchecked(&self, y: f64, f: f64) -> f64 {
        match self {
            Likelihood::Bernoulli => {
                if y == 1.0 {
                    log_norm_cdf(f)
                } else {
                    log_norm_cdf(-f)
                }
            }
            Likelihood::Binomial { trials } => {
                let n = f64::from(*trials);
                let log_coef = lgamma(n + 1.0) - lgamma(y + 1.0) - lgamma(n - y + 1.0);
                log_coef - y * softplus(-f) - (n - y) * softplus(f)
            }
            Likelihood::Exponential => -f - y * (-f).exp(),
            Likelihood::Gaussian { log_sigma } => {
                let r = (y - f) * (-log_sigma).exp();
                -LN_SQRT_2PI - log_sigma - 0.5 * r * r
            }
            Likelihood::Poisson => y * f - f.exp() - lgamma(y + 1.0),
            Likelihood::StudentT { nu, log_sigma } => {
                let r = (y - f) * (-log_sigma).exp();
                lgamma(0.5 * (nu + 1.0)) - lgamma(0.5 * nu) - 0.5 * (std::f64::consts::PI * nu).ln() - log_sigma
                    - 0.5 * (nu + 1.0) * (r * r / nu).ln_1p()
            }
            Likelihood::Flat => 0.0,
        }
    }

    /// `∂ log p(y | f) / ∂f`.
    pub fn dlog_density_df(&self, y: f64, f: f64) -> Result<f64> {
        self.check_response(y)?;
        Ok(self.dlog_df_unchecked(y, f))
    }

    pub(crate) fn dlog_df_unchecked(&self, y: f64, f: f64) -> f64 {
        match self {
            Likelihood::Bernoulli => {
                if y == 1.0 {
                    inv_mills(f)
                } else {
                    -inv_mills(-f)
                }
            }
            Likelihood::Binomial { trials } => y - f64::from(*trials) * logistic(f),
            Likelihood::Exponential => -1.0 + y * (-f).exp(),
            Likelihood::Gaussian { log_sigma } => (y - f) * (-2.0 * log_sigma).exp(),
            Likelihood::Poisson => y - f.exp(),
            Likelihood::StudentT { nu, log_sigma } => {
                let s = log_sigma.exp();
                let r = (y - f) / s;
                (nu + 1.0) * r / (s * (nu + r * r))
            }
            Likelihood::Flat => 0.0,
        }
    }

    /// `∂ log p(y | f) / ∂θ` over the likelihood's own log-parameters.
    pub fn dlog_density_dtheta(&self, y: f64, f: f64) -> Result<Vec<f64>> {
        self.check_response(y)?;
        let mut out = vec![0.0; self.num_params()];
        self.dlog_dtheta_into(y, f, &mut out);
        Ok(out)
    }

    pub(crate) fn dlog_dtheta_into(&self, y: f64, f: f64, out: &mut [f64]) {
        match self {
            Likelihood::Gaussian { log_sigma } => {
                let r = (y - f) * (-log_sigma).exp();
                out[0] = -1.0 + r * r;
            }
            Likelihood::StudentT { nu, log_sigma } => {
                let r = (y - f) * (-log_sigma).exp();
                out[0] = -1.0 + (nu + 1.0) * r * r / (nu + r * r);
            }
            _ => {}
        }
    }

    /// Mean and variance of `y*` when `f* ~ N(mean_f, var_f)`, integrating
    /// the likelihood's conditional moments with Gauss-Hermite quadrature.
    pub fn predictive_moments(&self, mean_f: f64, var_f: f64, quad_order: usize) -> (f64, f64) {
        let sd = var_f.max(0.0).sqrt();
        match self {
            Likelihood::Gaussian { log_sigma } => (mean_f, var_f.max(0.0) + (2.0 * log_sigma).exp()),
            Likelihood::Flat => (mean_f, var_f.max(0.0)),
            _ => {
                let rule = GaussHermite::new(quad_order);
                let mut m1 = 0.0;
                let mut m2 = 0.0;
                for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let (mean, var) = self.conditional_moments(mean_f + sd * z);
                    m1 += w * mean;
                    m2 += w * (var + mean * mean);
                }
                (m1, (m2 - m1 * m1).max(0.0))
            }
        }
    }

    /// `E[y | f]` and `Var[y | f]`.
    fn conditional_moments(&self, f: f64) -> (f64, f64) {
        match self {
            Likelihood::Bernoulli => {
                let p = norm_cdf(f);
                (p, p * (1.0 - p))
            }
            Likelihood::Binomial { trials } => {
                let n = f64::from(*trials);
                let p = logistic(f);
                (n * p, n * p * (1.0 - p))
            }
            Likelihood::Exponential => {
                let m = f.exp();
                (m, m * m)
            }
            Likelihood::Poisson => {
                let m = f.exp();
                (m, m)
            }
            Likelihood::StudentT { nu, log_sigma } => {
                let var = if *nu > 2.0 { (2.0 * log_sigma).exp() * nu / (nu - 2.0) } else { f64::INFINITY };
                (f, var)
            }
            Likelihood::Gaussian { log_sigma } => (f, (2.0 * log_sigma).exp()),
            Likelihood::Flat => (f, 0.0),
        }
    }
}

impl fmt::Display for Likelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Type: {}, Params: {:?}", self.type_name(), self.params())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<(Likelihood, Vec<f64>)> {
        vec![
            (Likelihood::Bernoulli, vec![0.0, 1.0]),
            (Likelihood::Binomial { trials: 7 }, vec![0.0, 3.0, 7.0]),
            (Likelihood::Exponential, vec![0.3, 2.5]),
            (Likelihood::Gaussian { log_sigma: -0.3 }, vec![-1.2, 0.4]),
            (Likelihood::Poisson, vec![0.0, 4.0]),
            (Likelihood::StudentT { nu: 3.0, log_sigma: 0.2 }, vec![-2.0, 0.7]),
        ]
    }

    #[test]
    fn closed_form_values() {
        let b = Likelihood::Bernoulli.log_density(1.0, 0.0).unwrap();
        assert!((b - 0.5f64.ln()).abs() < 1e-15);
        assert!((Likelihood::Poisson.log_density(0.0, 0.0).unwrap() + 1.0).abs() < 1e-15);
        let g = Likelihood::Gaussian { log_sigma: 0.0 }.log_density(0.7, 0.7).unwrap();
        assert!((g + 0.918_938_533_204_672_8).abs() < 1e-15);
        let d = Likelihood::Bernoulli.dlog_density_df(1.0, 0.0).unwrap();
        assert!((d - 0.797_884_560_802_865_4).abs() < 1e-14);
        let gd = Likelihood::Gaussian { log_sigma: 0.5 }.dlog_density_df(2.0, 0.5).unwrap();
        assert!((gd - 1.5 / 1f64.exp()).abs() < 1e-15);
        assert!(Likelihood::Bernoulli.dlog_density_dtheta(1.0, 0.3).unwrap().is_empty());
    }

    #[test]
    fn invalid_responses_are_rejected() {
        assert!(Likelihood::Bernoulli.log_density(0.5, 0.0).is_err());
        assert!(Likelihood::Binomial { trials: 3 }.log_density(4.0, 0.0).is_err());
        assert!(Likelihood::Exponential.log_density(0.0, 0.0).is_err());
        assert!(Likelihood::Poisson.log_density(-1.0, 0.0).is_err());
        assert!(Likelihood::Poisson.log_density(1.5, 0.0).is_err());
        assert!(Likelihood::Gaussian { log_sigma: 0.0 }.log_density(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn discrete_kinds_normalize() {
        for f in [-1.3, 0.0, 0.8] {
            let bern: f64 = [0.0, 1.0].iter().map(|&y| Likelihood::Bernoulli.log_density(y, f).unwrap().exp()).sum();
            assert!((bern - 1.0).abs() < 1e-10);
            let bin = Likelihood::Binomial { trials: 9 };
            let s: f64 = (0..=9).map(|y| bin.log_density(f64::from(y), f).unwrap().exp()).sum();
            assert!((s - 1.0).abs() < 1e-10);
            // Poisson truncated once the remaining tail mass is below 1e-12.
            let mut total = 0.0;
            let mut y = 0.0;
            loop {
                let p = Likelihood::Poisson.log_density(y, f).unwrap().exp();
                total += p;
                y += 1.0;
                if y > f.exp() + 10.0 && p < 1e-14 {
                    break;
                }
            }
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for (lik, ys) in all() {
            for &y in &ys {
                for &f in &[-1.7, -0.2, 0.4, 1.9] {
                    let an = lik.dlog_density_df(y, f).unwrap();
                    let fd = (lik.log_density(y, f + h).unwrap() - lik.log_density(y, f - h).unwrap()) / (2.0 * h);
                    assert!((an - fd).abs() / an.abs().max(1e-3) < 1e-6, "{} y={y} f={f}", lik.type_name());

                    let g = lik.dlog_density_dtheta(y, f).unwrap();
                    let p0 = lik.params();
                    for j in 0..p0.len() {
                        let mut lp = lik.clone();
                        let mut p = p0.clone();
                        p[j] += h;
                        lp.set_params(&p).unwrap();
                        let up = lp.log_density(y, f).unwrap();
                        p[j] -= 2.0 * h;
                        lp.set_params(&p).unwrap();
                        let dn = lp.log_density(y, f).unwrap();
                        let fd = (up - dn) / (2.0 * h);
                        assert!((g[j] - fd).abs() / g[j].abs().max(1e-3) < 1e-6, "{} theta", lik.type_name());
                    }
                }
            }
        }
    }

    #[test]
    fn predictive_moments_closed_forms() {
        let (m, v) = Likelihood::Gaussian { log_sigma: 0.0 }.predictive_moments(0.3, 0.5, 20);
        assert_eq!((m, v), (0.3, 1.5));
        let (m, _) = Likelihood::Bernoulli.predictive_moments(0.0, 1.0, 20);
        assert!((m - 0.5).abs() < 1e-15);
        let (m, v) = Likelihood::Poisson.predictive_moments(1.0, 0.0, 20);
        assert!((m - std::f64::consts::E).abs() < 1e-14);
        assert!((v - std::f64::consts::E).abs() < 1e-14);
        // Lognormal mean for the Poisson rate.
        let (m, _) = Likelihood::Poisson.predictive_moments(0.2, 0.3, 30);
        assert!((m - (0.2f64 + 0.15).exp()).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_probit_integral() {
        for &mu in &[-5.0, -1.0, 0.0, 0.7, 5.0] {
            for &v in &[0.0, 0.25, 1.0] {
                let (m, _) = Likelihood::Bernoulli.predictive_moments(mu, v, DEFAULT_QUAD_ORDER);
                let exact = norm_cdf(mu / (1.0f64 + v).sqrt());
                assert!((m - exact).abs() < 1e-8, "mu={mu} v={v}");
            }
        }
    }
}
