//! Hamiltonian Monte Carlo with an identity mass matrix.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{GpError, Result};
use crate::model::{ParamGroup, Sampleable};

#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    /// Leapfrog step size.
    pub epsilon: f64,
    /// Each iteration draws its number of leapfrog steps uniformly from
    /// `l_min..=l_max`. `l_min = l_max = 1` gives MALA.
    pub l_min: usize,
    pub l_max: usize,
    pub n_iter: usize,
    /// Leading iterations discarded.
    pub burn: usize,
    /// Keep every `thin`-th iteration after the burn-in.
    pub thin: usize,
    pub seed: u64,
    /// Parameter groups held at their starting values.
    pub frozen: Vec<ParamGroup>,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig { epsilon: 0.01, l_min: 5, l_max: 15, n_iter: 1000, burn: 0, thin: 1, seed: 0, frozen: vec![] }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(GpError::config("step size must be positive"));
        }
        if self.l_min == 0 || self.l_min > self.l_max {
            return Err(GpError::config("leapfrog bounds need 1 <= l_min <= l_max"));
        }
        if self.thin == 0 {
            return Err(GpError::config("thin must be at least 1"));
        }
        if self.burn >= self.n_iter {
            return Err(GpError::config("burn must be smaller than the number of iterations"));
        }
        Ok(())
    }

    /// Number of samples returned: `⌈(n_iter − burn) / thin⌉`.
    pub fn kept_samples(&self) -> usize {
        (self.n_iter - self.burn).div_ceil(self.thin)
    }
}

/// Kept states of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// `num_params × kept` matrix, one column per kept state.
    pub samples: DMatrix<f64>,
    pub names: Vec<String>,
    /// Fraction of accepted proposals over all iterations.
    pub acceptance_rate: f64,
}

/// Runs HMC on `model`, leaving it at the final state of the chain.
pub fn mcmc<M: Sampleable>(model: &mut M, cfg: &HmcConfig) -> Result<Chain> {
    cfg.validate()?;
    let free: Vec<bool> = model.state_groups().iter().map(|g| !cfg.frozen.contains(g)).collect();
    let dim = free.len();

    let mut x = model.state();
    let mut logp = model.log_density();
    let mut grad = model.grad_log_density();
    if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(GpError::input("log density is not finite at the starting state"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let kept = cfg.kept_samples();
    let mut samples = DMatrix::zeros(dim, kept);
    let mut accepted = 0usize;
    let mut col = 0;

    for iter in 0..cfg.n_iter {
        let mut p: Vec<f64> = free.iter().map(|&f| if f { rng.sample(StandardNormal) } else { 0.0 }).collect();
        let steps = rng.random_range(cfg.l_min..=cfg.l_max);
        let h0 = -logp + 0.5 * p.iter().map(|v| v * v).sum::<f64>();

        let mut xn = x.clone();
        let mut gn = grad.clone();
        let mut logpn = logp;
        let mut ok = true;
        kick(&mut p, &gn, 0.5 * cfg.epsilon, &free);
        for step in 0..steps {
            for i in 0..dim {
                if free[i] {
                    xn[i] += cfg.epsilon * p[i];
                }
            }
            if model.set_state(&xn).is_err() {
                ok = false;
                break;
            }
            logpn = model.log_density();
            if !logpn.is_finite() {
                ok = false;
                break;
            }
            gn = model.grad_log_density();
            if gn.iter().any(|g| !g.is_finite()) {
                ok = false;
                break;
            }
            let scale = if step + 1 == steps { 0.5 } else { 1.0 };
            kick(&mut p, &gn, scale * cfg.epsilon, &free);
        }

        let accept = ok && {
            let h1 = -logpn + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
            let log_ratio = h0 - h1;
            log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
        };
        if accept {
            accepted += 1;
            x = xn;
            logp = logpn;
            grad = gn;
        } else {
            model.set_state(&x)?;
        }

        if iter >= cfg.burn && (iter - cfg.burn) % cfg.thin == 0 {
            samples.column_mut(col).copy_from_slice(&x);
            col += 1;
        }
    }
    debug_assert_eq!(col, kept);

    Ok(Chain {
        samples,
        names: model.state_names(),
        acceptance_rate: accepted as f64 / cfg.n_iter as f64,
    })
}

fn kick(p: &mut [f64], grad: &[f64], eps: f64, free: &[bool]) {
    for ((pi, gi), &f) in p.iter_mut().zip(grad).zip(free) {
        if f {
            *pi += eps * gi;
        }
    }
}
