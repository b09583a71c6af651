//! Interfaces shared by the optimizer and the sampler.

use crate::error::Result;
use crate::priors::PriorSet;

/// Which part of a model a flattened parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    /// Whitened latent values of a Monte Carlo GP.
    Latent,
    /// Log standard deviation of Gaussian observation noise.
    Noise,
    /// Likelihood parameters of a Monte Carlo GP.
    Lik,
    Mean,
    Kernel,
}

/// A model whose hyperparameters can be fitted by maximizing a marginal
/// likelihood.
pub trait Objective {
    /// Flattened hyperparameters in the order `(noise, mean, kernel)`.
    fn params(&self) -> Vec<f64>;
    /// Installs new hyperparameters and refreshes every cached factor.
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    fn param_groups(&self) -> Vec<ParamGroup>;
    fn log_marginal(&self) -> f64;
    fn grad_log_marginal(&self) -> Vec<f64>;
    fn priors(&self) -> &PriorSet;
}

/// A model that can be explored with Hamiltonian Monte Carlo.
pub trait Sampleable {
    fn state(&self) -> Vec<f64>;
    fn set_state(&mut self, state: &[f64]) -> Result<()>;
    fn state_groups(&self) -> Vec<ParamGroup>;
    fn state_names(&self) -> Vec<String>;
    /// Unnormalized log density of the current state.
    fn log_density(&self) -> f64;
    fn grad_log_density(&self) -> Vec<f64>;
}

/// `(noise, mean, kernel)` group labels.
pub(crate) fn regression_groups(n_mean: usize, n_kernel: usize) -> Vec<ParamGroup> {
    let mut g = vec![ParamGroup::Noise];
    g.extend(std::iter::repeat_n(ParamGroup::Mean, n_mean));
    g.extend(std::iter::repeat_n(ParamGroup::Kernel, n_kernel));
    g
}
