//! GP with a non-Gaussian likelihood, sampled over the whitened latent
//! parameterization `f = m(X) + L_θ v`, `v ~ N(0, I)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};
use crate::exact::LN_2PI;
use crate::kernels::Kernel;
use crate::likelihoods::Likelihood;
use crate::linalg::{chol_derivative_blocked, Cholesky, JitterPolicy};
use crate::means::MeanFunction;
use crate::model::{ParamGroup, Sampleable};
use crate::priors::{Prior, PriorSet};

/// Column block width of the Cholesky derivative.
const DERIV_BLOCK: usize = 32;

#[derive(Debug, Clone)]
pub struct GpMc {
    x: DMatrix<f64>,
    y: DVector<f64>,
    mean: MeanFunction,
    kernel: Kernel,
    lik: Likelihood,
    v: DVector<f64>,
    /// Priors over `θ = (likelihood, mean, kernel)`.
    priors: PriorSet,
    chol: Cholesky,
    f: DVector<f64>,
    target: f64,
}

impl GpMc {
    /// Builds the model with `v = 0` and θ at the supplied values.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, mean: MeanFunction, kernel: Kernel, lik: Likelihood) -> Result<Self> {
        let n = x.ncols();
        if n == 0 {
            return Err(GpError::input("at least one observation is required"));
        }
        if n != y.len() {
            return Err(GpError::input(format!("{n} inputs but {} responses", y.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GpError::input("inputs contain non-finite values"));
        }
        y.iter().try_for_each(|&yi| lik.check_response(yi))?;
        kernel.validate(x.nrows())?;
        mean.validate(x.nrows())?;
        let n_theta = lik.num_params() + mean.num_params() + kernel.num_params();
        let mut gp = GpMc {
            x,
            y,
            mean,
            kernel,
            lik,
            v: DVector::zeros(n),
            priors: PriorSet::flat(n_theta),
            chol: Cholesky::from_factor(DMatrix::zeros(0, 0), 0.0),
            f: DVector::zeros(n),
            target: 0.0,
        };
        gp.refresh()?;
        Ok(gp)
    }

    fn refresh(&mut self) -> Result<()> {
        let k = self.kernel.gram_unchecked(&self.x);
        self.chol = Cholesky::factorize(&k, JitterPolicy::LATENT)?;
        self.f = self.mean.eval_unchecked(&self.x) + self.chol.factor() * &self.v;
        self.target = self.compute_target();
        Ok(())
    }

    fn compute_target(&self) -> f64 {
        let loglik: f64 = self.y.iter().zip(self.f.iter()).map(|(&y, &f)| self.lik.log_density_unchecked(y, f)).sum();
        let n = self.v.len() as f64;
        let logprior_v = -0.5 * self.v.norm_squared() - 0.5 * n * LN_2PI;
        loglik + logprior_v + self.priors.log_density(&self.theta())
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn mean(&self) -> &MeanFunction {
        &self.mean
    }

    pub fn likelihood(&self) -> &Likelihood {
        &self.lik
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }

    /// Latent function values `m(X) + L_θ v`.
    pub fn latent(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// Hyperparameters `(likelihood, mean, kernel)`.
    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.lik.params();
        t.extend(self.mean.params());
        t.extend(self.kernel.params());
        t
    }

    pub fn num_params(&self) -> usize {
        self.len() + self.priors.len()
    }

    /// Full state `(v, θ)`.
    pub fn params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.v.iter().copied().collect();
        p.extend(self.theta());
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.len()).map(|i| format!("v{i}")).collect();
        names.extend(self.lik.param_names());
        names.extend(self.mean.param_names());
        names.extend(self.kernel.param_names());
        names
    }

    /// Installs a state `(v, θ)` and recomputes `L_θ`, `f` and the target.
    /// On failure the previous state is kept.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(GpError::config(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let backup = (self.v.clone(), self.lik.clone(), self.mean.clone(), self.kernel.clone());
        let n = self.len();
        let nl = self.lik.num_params();
        let nm = self.mean.num_params();
        self.v.copy_from_slice(&params[..n]);
        self.lik.set_params(&params[n..n + nl])?;
        self.mean.set_params(&params[n + nl..n + nl + nm])?;
        self.kernel.set_params(&params[n + nl + nm..])?;
        if let Err(e) = self.refresh() {
            (self.v, self.lik, self.mean, self.kernel) = backup;
            self.refresh()?;
            return Err(e);
        }
        Ok(())
    }

    /// Recomputes the cached target from scratch.
    pub fn update_target(&mut self) -> Result<()> {
        self.refresh()
    }

    /// Cached joint log density `log p(y | f) + log N(v; 0, I) + log p(θ)`.
    pub fn log_posterior(&self) -> f64 {
        self.target
    }

    pub fn priors(&self) -> &PriorSet {
        &self.priors
    }

    pub fn set_priors(&mut self, group: ParamGroup, priors: &[Prior]) -> Result<()> {
        let nl = self.lik.num_params();
        let nm = self.mean.num_params();
        let range = match group {
            ParamGroup::Lik => 0..nl,
            ParamGroup::Mean => nl..nl + nm,
            ParamGroup::Kernel => nl + nm..self.priors.len(),
            other => return Err(GpError::config(format!("cannot place priors on {other:?} parameters"))),
        };
        self.priors.assign(range, priors)?;
        self.target = self.compute_target();
        Ok(())
    }

    /// Gradient of the joint log density over `(v, θ)`.
    pub fn grad_log_posterior(&self) -> Vec<f64> {
        let n = self.len();
        let df = DVector::from_fn(n, |i, _| self.lik.dlog_df_unchecked(self.y[i], self.f[i]));
        let l = self.chol.factor();

        let mut grad: Vec<f64> = (l.tr_mul(&df) - &self.v).iter().copied().collect();

        let mut buf = vec![0.0; self.lik.num_params()];
        let mut lik_grad = vec![0.0; self.lik.num_params()];
        for i in 0..n {
            self.lik.dlog_dtheta_into(self.y[i], self.f[i], &mut buf);
            for (a, b) in lik_grad.iter_mut().zip(&buf) {
                *a += b;
            }
        }
        grad.extend(lik_grad);

        grad.extend((self.mean.grad_unchecked(&self.x) * &df).iter());

        // ∂f/∂θ_j = dL_j v with dL_j the derivative of the Cholesky factor
        // along ∂K/∂θ_j. The factor is of K + jI where the jitter j is a
        // fixed multiple of the mean diagonal of K, so it moves with θ too.
        let jitter_ratio = self.chol.jitter() / self.kernel.diag_unchecked(&self.x).sum();
        for mut dk in self.kernel.gram_grads_unchecked(&self.x) {
            let dj = jitter_ratio * dk.trace();
            for i in 0..n {
                dk[(i, i)] += dj;
            }
            let dl = chol_derivative_blocked(l, &dk, DERIV_BLOCK);
            grad.push(df.dot(&(dl * &self.v)));
        }

        let theta = self.theta();
        self.priors.add_gradient(&theta, &mut grad[n..]);
        grad
    }

    /// Per-sample predictive moments of `y*` at `xs`.
    ///
    /// Each column of `samples` is a state `(v, θ)`. For every sample the
    /// latent GP is conditioned on its `f`, and the likelihood's predictive
    /// moments are integrated with Gauss-Hermite quadrature of order
    /// `quad_order`. Averaging the rows of `mean` gives the Monte Carlo
    /// estimate of the predictive mean.
    pub fn predict_y(&self, samples: &DMatrix<f64>, xs: &DMatrix<f64>, quad_order: usize) -> Result<McPrediction> {
        if samples.nrows() != self.num_params() {
            return Err(GpError::config(format!(
                "samples have {} rows, expected {}",
                samples.nrows(),
                self.num_params()
            )));
        }
        if xs.nrows() != self.x.nrows() {
            return Err(GpError::input(format!(
                "test inputs have dimension {}, expected {}",
                xs.nrows(),
                self.x.nrows()
            )));
        }
        let s = samples.ncols();
        let m = xs.ncols();
        let mut means = DMatrix::zeros(s, m);
        let mut vars = DMatrix::zeros(s, m);
        let mut gp = self.clone();
        for k in 0..s {
            gp.set_params(samples.column(k).as_slice())?;
            let kxs = gp.kernel.cross_unchecked(&gp.x, xs);
            let w = gp.chol.solve_lower_mat(&kxs);
            let mu = gp.mean.eval_unchecked(xs) + w.tr_mul(&gp.v);
            let prior = gp.kernel.diag_unchecked(xs);
            for j in 0..m {
                let var = (prior[j] - w.column(j).norm_squared()).max(0.0);
                let (pm, pv) = gp.lik.predictive_moments(mu[j], var, quad_order);
                means[(k, j)] = pm;
                vars[(k, j)] = pv;
            }
        }
        Ok(McPrediction { mean: means, variance: vars })
    }
}

/// Per-sample predictive moments: row `k` belongs to sample `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct McPrediction {
    pub mean: DMatrix<f64>,
    pub variance: DMatrix<f64>,
}

impl McPrediction {
    /// Monte Carlo average over samples.
    pub fn average_mean(&self) -> DVector<f64> {
        self.mean.row_mean().transpose()
    }
}

impl Sampleable for GpMc {
    fn state(&self) -> Vec<f64> {
        self.params()
    }

    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        self.set_params(state)
    }

    fn state_groups(&self) -> Vec<ParamGroup> {
        let mut g = vec![ParamGroup::Latent; self.len()];
        g.extend(std::iter::repeat_n(ParamGroup::Lik, self.lik.num_params()));
        g.extend(std::iter::repeat_n(ParamGroup::Mean, self.mean.num_params()));
        g.extend(std::iter::repeat_n(ParamGroup::Kernel, self.kernel.num_params()));
        g
    }

    fn state_names(&self) -> Vec<String> {
        self.param_names()
    }

    fn log_density(&self) -> f64 {
        self.target
    }

    fn grad_log_density(&self) -> Vec<f64> {
        self.grad_log_posterior()
    }
}
