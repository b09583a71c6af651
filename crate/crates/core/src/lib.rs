//! Gaussian process models: exact regression, Monte Carlo inference for
//! non-Gaussian likelihoods and inducing-point approximations.
//!
//! Inputs are `d × n` matrices with one observation per column. All kernel
//! hyperparameters live on the log scale; mean-function parameters do not.

pub mod error;
pub mod exact;
pub mod hmc;
pub mod kernels;
pub mod likelihoods;
pub mod linalg;
pub mod mc;
pub mod means;
pub mod model;
pub mod optim;
pub mod priors;
pub mod quadrature;
pub mod simulate;
pub mod sparse;
pub mod special;

pub use error::{GpError, Result};
pub use exact::{sample_prior, GpExact};
pub use hmc::{mcmc, Chain, HmcConfig};
pub use kernels::{GramMatrix, Kernel, LengthScale, MaternOrder};
pub use likelihoods::{Likelihood, DEFAULT_QUAD_ORDER};
pub use linalg::{Cholesky, JitterPolicy};
pub use mc::{GpMc, McPrediction};
pub use means::MeanFunction;
pub use model::{Objective, ParamGroup, Sampleable};
pub use optim::{map_optimize, optimize, OptimResult, OptimizeOptions};
pub use priors::{Prior, PriorSet};
pub use quadrature::GaussHermite;
pub use sparse::{nearest_inducing_blocks, Scheme, SparseGp};

pub use nalgebra::{DMatrix, DVector};
