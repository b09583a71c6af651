//! Univariate priors over (log-)hyperparameters.

use std::f64::consts::PI;

use crate::error::{GpError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    /// Improper `p(θ) ∝ 1`; contributes nothing.
    Flat,
    Normal { mean: f64, sd: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl Prior {
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Flat => 0.0,
            Prior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
            }
            Prior::Uniform { lower, upper } => {
                if (lower..=upper).contains(&x) {
                    -(upper - lower).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn dlog_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => -(x - mean) / (sd * sd),
            _ => 0.0,
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            Prior::Normal { sd, .. } if !(sd > 0.0) => Err(GpError::config("normal prior needs sd > 0")),
            Prior::Uniform { lower, upper } if !(lower < upper) => {
                Err(GpError::config("uniform prior needs lower < upper"))
            }
            _ => Ok(()),
        }
    }
}

/// One prior per entry of a flattened parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSet {
    priors: Vec<Prior>,
}

impl PriorSet {
    pub fn flat(n: usize) -> Self {
        PriorSet { priors: vec![Prior::Flat; n] }
    }

    pub fn new(priors: Vec<Prior>) -> Result<Self> {
        priors.iter().try_for_each(Prior::check)?;
        Ok(PriorSet { priors })
    }

    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }

    pub fn priors(&self) -> &[Prior] {
        &self.priors
    }

    /// Replaces the priors on `range` of the flattened vector.
    pub(crate) fn assign(&mut self, range: std::ops::Range<usize>, priors: &[Prior]) -> Result<()> {
        if range.len() != priors.len() {
            return Err(GpError::config(format!(
                "expected {} priors for this parameter group, got {}",
                range.len(),
                priors.len()
            )));
        }
        priors.iter().try_for_each(Prior::check)?;
        self.priors[range].copy_from_slice(priors);
        Ok(())
    }

    pub fn log_density(&self, params: &[f64]) -> f64 {
        self.priors.iter().zip(params).map(|(p, &x)| p.log_density(x)).sum()
    }

    /// Adds `∂ log p / ∂θ` into `grad`.
    pub fn add_gradient(&self, params: &[f64], grad: &mut [f64]) {
        for ((p, &x), g) in self.priors.iter().zip(params).zip(grad.iter_mut()) {
            *g += p.dlog_density(x);
        }
    }
}
