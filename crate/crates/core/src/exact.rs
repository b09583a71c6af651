//! Exact GP regression with Gaussian observation noise.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{GpError, Result};
use crate::kernels::{col, Kernel};
use crate::linalg::{Cholesky, JitterPolicy};
use crate::means::MeanFunction;
use crate::model::{regression_groups, Objective, ParamGroup, Sampleable};
use crate::priors::{Prior, PriorSet};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Exact GP with cached factorization of `K + σ²I`.
///
/// Inputs are stored column-wise (`d × n`). A GP built with
/// [`GpExact::elastic`] keeps spare room for `capacity` observations and
/// grows by `stepsize` whenever it fills up.
#[derive(Debug, Clone)]
pub struct GpExact {
    x: DMatrix<f64>,
    y: DVector<f64>,
    mean: MeanFunction,
    kernel: Kernel,
    log_noise: f64,
    priors: PriorSet,
    /// `y − m(X)`.
    yc: DVector<f64>,
    chol: Cholesky,
    alpha: DVector<f64>,
    mll: f64,
    capacity: usize,
    stepsize: usize,
}

impl GpExact {
    /// Fits the GP to `n ≥ 1` observations.
    pub fn fit(x: DMatrix<f64>, y: DVector<f64>, mean: MeanFunction, kernel: Kernel, log_noise: f64) -> Result<Self> {
        if x.ncols() == 0 {
            return Err(GpError::input("at least one observation is required"));
        }
        let n = x.ncols();
        Self::build(x, y, mean, kernel, log_noise, n, 1)
    }

    /// An empty GP over `dim`-dimensional inputs that accepts observations
    /// through [`GpExact::append`].
    pub fn elastic(
        dim: usize,
        mean: MeanFunction,
        kernel: Kernel,
        log_noise: f64,
        capacity: usize,
        stepsize: usize,
    ) -> Result<Self> {
        if stepsize == 0 {
            return Err(GpError::config("elastic stepsize must be positive"));
        }
        Self::build(DMatrix::zeros(dim, 0), DVector::zeros(0), mean, kernel, log_noise, capacity, stepsize)
    }

    fn build(
        x: DMatrix<f64>,
        y: DVector<f64>,
        mean: MeanFunction,
        kernel: Kernel,
        log_noise: f64,
        capacity: usize,
        stepsize: usize,
    ) -> Result<Self> {
        if x.ncols() != y.len() {
            return Err(GpError::input(format!("{} inputs but {} responses", x.ncols(), y.len())));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(GpError::input("data contain non-finite values"));
        }
        if x.nrows() == 0 {
            return Err(GpError::input("inputs must have at least one dimension"));
        }
        kernel.validate(x.nrows())?;
        mean.validate(x.nrows())?;
        let n_params = 1 + mean.num_params() + kernel.num_params();
        let n = x.ncols();
        let mut x_store: Vec<f64> = Vec::with_capacity(x.nrows() * capacity.max(n));
        x_store.extend_from_slice(x.as_slice());
        let mut y_store: Vec<f64> = Vec::with_capacity(capacity.max(n));
        y_store.extend_from_slice(y.as_slice());
        let mut gp = GpExact {
            x: DMatrix::from_vec(x.nrows(), n, x_store),
            y: DVector::from_vec(y_store),
            mean,
            kernel,
            log_noise,
            priors: PriorSet::flat(n_params),
            yc: DVector::zeros(0),
            chol: Cholesky::from_factor(DMatrix::zeros(0, 0), 0.0),
            alpha: DVector::zeros(0),
            mll: 0.0,
            capacity: capacity.max(n),
            stepsize,
        };
        gp.refresh()?;
        Ok(gp)
    }

    /// Recomputes the factorization, weights and marginal likelihood.
    fn refresh(&mut self) -> Result<()> {
        let mut k = self.kernel.gram_unchecked(&self.x);
        let s2 = self.noise_variance();
        for i in 0..k.nrows() {
            k[(i, i)] += s2;
        }
        self.chol = Cholesky::factorize(&k, JitterPolicy::EXACT)?;
        self.yc = &self.y - self.mean.eval_unchecked(&self.x);
        self.update_weights();
        Ok(())
    }

    fn update_weights(&mut self) {
        self.alpha = self.chol.solve(&self.yc);
        let n = self.yc.len() as f64;
        self.mll = -0.5 * self.yc.dot(&self.alpha) - 0.5 * self.chol.log_det() - 0.5 * n * LN_2PI;
    }

    /// Adds observations (columns of `x_new`) without refactorizing: each
    /// point extends the Cholesky factor by one row.
    pub fn append(&mut self, x_new: &DMatrix<f64>, y_new: &[f64]) -> Result<()> {
        if x_new.nrows() != self.dim() {
            return Err(GpError::input(format!(
                "appended inputs have dimension {}, expected {}",
                x_new.nrows(),
                self.dim()
            )));
        }
        if x_new.ncols() != y_new.len() {
            return Err(GpError::input(format!("{} inputs but {} responses", x_new.ncols(), y_new.len())));
        }
        if x_new.iter().chain(y_new).any(|v| !v.is_finite()) {
            return Err(GpError::input("appended data contain non-finite values"));
        }
        let s2 = self.noise_variance();
        let m_new = self.mean.eval_unchecked(x_new);
        for j in 0..x_new.ncols() {
            let xj = col(x_new, j);
            let cross = DVector::from_fn(self.len(), |i, _| self.kernel.value(col(&self.x, i), xj));
            let diag = self.kernel.value(xj, xj) + s2;
            self.chol.extend(&cross, diag)?;
            self.push(xj, y_new[j], y_new[j] - m_new[j]);
        }
        self.update_weights();
        Ok(())
    }

    fn push(&mut self, xj: &[f64], y: f64, yc: f64) {
        let d = self.dim();
        let n = self.len();
        if n == self.capacity {
            self.capacity += self.stepsize;
        }
        let cap = self.capacity;
        let grow = |v: Vec<f64>, per: usize| {
            let mut v = v;
            if v.capacity() < cap * per {
                // Allocate the new capacity in one go and copy the old data.
                let mut bigger = Vec::with_capacity(cap * per);
                bigger.extend_from_slice(&v);
                v = bigger;
            }
            v
        };
        let mut xs: Vec<f64> = grow(std::mem::replace(&mut self.x, DMatrix::zeros(d, 0)).data.into(), d);
        xs.extend_from_slice(xj);
        self.x = DMatrix::from_vec(d, n + 1, xs);
        let mut ys: Vec<f64> = grow(std::mem::replace(&mut self.y, DVector::zeros(0)).data.into(), 1);
        ys.push(y);
        self.y = DVector::from_vec(ys);
        let mut c: Vec<f64> = std::mem::replace(&mut self.yc, DVector::zeros(0)).data.into();
        c.push(yc);
        self.yc = DVector::from_vec(c);
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn mean(&self) -> &MeanFunction {
        &self.mean
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn log_noise(&self) -> f64 {
        self.log_noise
    }

    pub fn noise_variance(&self) -> f64 {
        (2.0 * self.log_noise).exp()
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// `(K + σ²I)⁻¹ (y − m(X))`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Cached log marginal likelihood; 0 for an empty GP.
    pub fn log_marginal(&self) -> f64 {
        self.mll
    }

    /// Gradient of the log marginal likelihood over `(log σ, mean, kernel)`.
    pub fn grad_log_marginal(&self) -> Vec<f64> {
        let n = self.len();
        let mut w = self.chol.inverse();
        w.neg_mut();
        w.ger(1.0, &self.alpha, &self.alpha, 1.0);

        let mut grad = Vec::with_capacity(self.num_params());
        grad.push(self.noise_variance() * w.trace());
        if n > 0 {
            let gm = self.mean.grad_unchecked(&self.x);
            grad.extend((&gm * &self.alpha).iter());
        } else {
            grad.extend(std::iter::repeat_n(0.0, self.mean.num_params()));
        }
        grad.extend(self.kernel.grad_contract_sym(&self.x, &w).iter().map(|g| 0.5 * g));
        grad
    }

    pub fn num_params(&self) -> usize {
        1 + self.mean.num_params() + self.kernel.num_params()
    }

    /// Hyperparameters ordered `(log σ, mean, kernel)`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = vec![self.log_noise];
        p.extend(self.mean.params());
        p.extend(self.kernel.params());
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["Noise".to_string()];
        names.extend(self.mean.param_names());
        names.extend(self.kernel.param_names());
        names
    }

    /// Installs new hyperparameters and refits. On failure the previous
    /// state is kept.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(GpError::config(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let backup = (self.log_noise, self.mean.clone(), self.kernel.clone());
        let nm = self.mean.num_params();
        self.log_noise = params[0];
        self.mean.set_params(&params[1..1 + nm])?;
        self.kernel.set_params(&params[1 + nm..])?;
        if let Err(e) = self.refresh() {
            (self.log_noise, self.mean, self.kernel) = backup;
            self.refresh()?;
            return Err(e);
        }
        Ok(())
    }

    pub fn priors(&self) -> &PriorSet {
        &self.priors
    }

    /// Attaches priors to one parameter group. The noise prior defaults to
    /// the improper flat prior, as do all others.
    pub fn set_priors(&mut self, group: ParamGroup, priors: &[Prior]) -> Result<()> {
        let nm = self.mean.num_params();
        let range = match group {
            ParamGroup::Noise => 0..1,
            ParamGroup::Mean => 1..1 + nm,
            ParamGroup::Kernel => 1 + nm..self.num_params(),
            other => return Err(GpError::config(format!("exact GPs have no {other:?} parameters"))),
        };
        self.priors.assign(range, priors)
    }

    /// Log marginal likelihood plus log prior.
    pub fn log_posterior(&self) -> f64 {
        self.mll + self.priors.log_density(&self.params())
    }

    // ---------------------------------------------------------------------
    // Prediction

    fn latent_moments(&self, xs: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if xs.nrows() != self.dim() {
            return Err(GpError::input(format!(
                "test inputs have dimension {}, expected {}",
                xs.nrows(),
                self.dim()
            )));
        }
        let kxs = self.kernel.cross_unchecked(&self.x, xs);
        let mean = self.mean.eval_unchecked(xs) + kxs.tr_mul(&self.alpha);
        Ok((mean, self.chol.solve_lower_mat(&kxs)))
    }

    /// Latent mean and marginal variance at the columns of `xs`.
    pub fn predict_f(&self, xs: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let (mean, v) = self.latent_moments(xs)?;
        let prior = self.kernel.diag_unchecked(xs);
        let var = DVector::from_fn(xs.ncols(), |j, _| (prior[j] - v.column(j).norm_squared()).max(0.0));
        Ok((mean, var))
    }

    /// Latent mean and full covariance at the columns of `xs`.
    pub fn predict_f_cov(&self, xs: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (mean, v) = self.latent_moments(xs)?;
        let mut cov = self.kernel.gram_unchecked(xs);
        cov.gemm_tr(-1.0, &v, &v, 1.0);
        for i in 0..cov.nrows() {
            cov[(i, i)] = cov[(i, i)].max(0.0);
        }
        Ok((mean, cov))
    }

    /// Predictive mean and variance of new observations.
    pub fn predict_y(&self, xs: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let (mean, var) = self.predict_f(xs)?;
        Ok((mean, var.add_scalar(self.noise_variance())))
    }

    pub fn predict_y_cov(&self, xs: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (mean, mut cov) = self.predict_f_cov(xs)?;
        let s2 = self.noise_variance();
        for i in 0..cov.nrows() {
            cov[(i, i)] += s2;
        }
        Ok((mean, cov))
    }

    /// `count` joint draws of the latent function at `xs`, one per row.
    pub fn sample_posterior(&self, xs: &DMatrix<f64>, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        let (mean, cov) = self.predict_f_cov(xs)?;
        draw_gaussian(&mean, &cov, count, seed)
    }

    /// Approximate heap footprint of the fitted state in bytes.
    pub fn memory_bytes(&self) -> usize {
        let n = self.len();
        8 * (self.dim() * n + 3 * n + self.chol.dim() * self.chol.dim())
    }
}

/// `count` draws from the GP prior at `xs`, one per row.
pub fn sample_prior(
    mean: &MeanFunction,
    kernel: &Kernel,
    xs: &DMatrix<f64>,
    count: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if xs.ncols() == 0 {
        return Err(GpError::input("at least one test input is required"));
    }
    let m = mean.eval(xs)?;
    let k = kernel.gram(xs)?;
    draw_gaussian(&m, &k.values, count, seed)
}

fn draw_gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    let chol = Cholesky::factorize(cov, JitterPolicy::LATENT)?;
    let m = mean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(m, count, |_, _| StandardNormal.sample(&mut rng));
    let mut draws = chol.factor() * z;
    for mut c in draws.column_iter_mut() {
        c += mean;
    }
    Ok(draws.transpose())
}

impl Objective for GpExact {
    fn params(&self) -> Vec<f64> {
        GpExact::params(self)
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        GpExact::set_params(self, params)
    }

    fn param_groups(&self) -> Vec<ParamGroup> {
        regression_groups(self.mean.num_params(), self.kernel.num_params())
    }

    fn log_marginal(&self) -> f64 {
        self.mll
    }

    fn grad_log_marginal(&self) -> Vec<f64> {
        GpExact::grad_log_marginal(self)
    }

    fn priors(&self) -> &PriorSet {
        &self.priors
    }
}

impl Sampleable for GpExact {
    fn state(&self) -> Vec<f64> {
        self.params()
    }

    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        self.set_params(state)
    }

    fn state_groups(&self) -> Vec<ParamGroup> {
        Objective::param_groups(self)
    }

    fn state_names(&self) -> Vec<String> {
        self.param_names()
    }

    fn log_density(&self) -> f64 {
        self.log_posterior()
    }

    fn grad_log_density(&self) -> Vec<f64> {
        let mut g = self.grad_log_marginal();
        self.priors.add_gradient(&self.params(), &mut g);
        g
    }
}

fn abbreviate(values: &[f64]) -> String {
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ");
    if values.len() <= 6 {
        format!("[{}]", fmt(values))
    } else {
        format!("[{}, ...]", fmt(&values[..6]))
    }
}

impl fmt::Display for GpExact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GP Exact object:")?;
        writeln!(f, "Dim = {}", self.dim())?;
        writeln!(f, "Number of observations = {}", self.len())?;
        writeln!(f, "Mean function:")?;
        writeln!(f, "{}", self.mean)?;
        writeln!(f, "Kernel:")?;
        write!(f, "{}", self.kernel)?;
        if self.is_empty() {
            return writeln!(f, "  No observation data");
        }
        writeln!(f, "Input observations = ")?;
        let rows: Vec<String> = self.x.row_iter().map(|r| abbreviate(r.transpose().as_slice())).collect();
        writeln!(f, "{}", rows.join("; "))?;
        writeln!(f, "Output observations = {}", abbreviate(self.y.as_slice()))?;
        writeln!(f, "Variance of observation noise = {}", self.noise_variance())?;
        writeln!(f, "Marginal Log-Likelihood = {:.3}", self.mll)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::MaternOrder;
    use rand::Rng;

    fn problem(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(d, n, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(n, |i, _| (1.3f64 * x[(0, i)]).sin() + 0.1 * rng.random_range(-1.0..1.0));
        (x, y)
    }

    #[test]
    fn single_point_closed_form() {
        let x = DMatrix::from_element(1, 1, 0.0);
        let gp = GpExact::fit(x.clone(), DVector::from_element(1, 0.0), MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), 0.0)
            .unwrap();
        assert!((gp.log_marginal() + 1.265_512_123_484_645_4).abs() < 1e-12);
        let gp = GpExact::fit(x, DVector::from_element(1, 1.0), MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), 0.0).unwrap();
        assert!((gp.log_marginal() + 1.515_512_123_484_645_4).abs() < 1e-12);
        let (m, _) = gp.predict_f(&DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((m[0] - (-0.5f64).exp() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn duplicated_points_need_no_jitter() {
        let x = DMatrix::from_row_slice(1, 3, &[0.5, 0.5, 0.5]);
        let gp = GpExact::fit(x, DVector::from_vec(vec![1.0, 1.1, 0.9]), MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), -1.0)
            .unwrap();
        assert_eq!(gp.cholesky().jitter(), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = problem(12, 2, 3);
        let kernel = Kernel::Sum(vec![
            Kernel::matern_ard(MaternOrder::FiveHalves, vec![0.2, -0.1], 0.1),
            Kernel::Product(vec![Kernel::se_iso(0.3, -0.2), Kernel::periodic(0.1, 0.0, 0.5)]),
        ]);
        let mean = MeanFunction::Sum(vec![MeanFunction::Const(0.2), MeanFunction::Lin(vec![0.1, -0.3])]);
        let gp = GpExact::fit(x, y, mean, kernel, -1.0).unwrap();
        let g = gp.grad_log_marginal();
        let p0 = gp.params();
        let h = 1e-5;
        for j in 0..p0.len() {
            let mut gpj = gp.clone();
            let mut p = p0.clone();
            p[j] += h;
            gpj.set_params(&p).unwrap();
            let up = gpj.log_marginal();
            p[j] -= 2.0 * h;
            gpj.set_params(&p).unwrap();
            let fd = (up - gpj.log_marginal()) / (2.0 * h);
            assert!((g[j] - fd).abs() / g[j].abs().max(1e-2) < 1e-5, "param {j}: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn fixed_parameters_are_absent_from_gradient() {
        let (x, y) = problem(6, 1, 4);
        let k = Kernel::fixed(Kernel::se_iso(0.0, 0.0), vec![true, false]).unwrap();
        let gp = GpExact::fit(x, y, MeanFunction::Zero, k, -1.0).unwrap();
        assert_eq!(gp.grad_log_marginal().len(), 2);
        assert_eq!(gp.param_names(), vec!["Noise", "SE log length"]);
    }

    #[test]
    fn full_covariance_diagonal_matches_variances() {
        let (x, y) = problem(10, 1, 5);
        let gp = GpExact::fit(x, y, MeanFunction::Const(0.3), Kernel::se_iso(-0.5, 0.2), -1.5).unwrap();
        let xs = DMatrix::from_fn(1, 7, |_, j| -3.0 + j as f64);
        let (m1, var) = gp.predict_f(&xs).unwrap();
        let (m2, cov) = gp.predict_f_cov(&xs).unwrap();
        assert_eq!(m1, m2);
        assert!((cov.diagonal() - &var).amax() < 1e-12);
        let (_, vy) = gp.predict_y(&xs).unwrap();
        assert!((vy - var).add_scalar(-gp.noise_variance()).amax() < 1e-14);
    }

    #[test]
    fn far_field_reverts_to_prior() {
        let (x, y) = problem(10, 1, 6);
        let gp = GpExact::fit(x, y, MeanFunction::Const(0.7), Kernel::se_iso(-1.0, 0.4), -2.0).unwrap();
        let (m, v) = gp.predict_f(&DMatrix::from_element(1, 1, 1e3)).unwrap();
        assert!((m[0] - 0.7).abs() < 1e-14);
        assert!((v[0] - 0.8f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn set_params_round_trip_and_failure_keeps_state() {
        let (x, y) = problem(8, 1, 7);
        let mut gp = GpExact::fit(x, y, MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), -1.0).unwrap();
        let p = vec![-0.5, 0.2, 0.1];
        gp.set_params(&p).unwrap();
        assert_eq!(gp.params(), p);
        assert!(gp.set_params(&[0.0]).is_err());
        assert_eq!(gp.params(), p);
    }

    #[test]
    fn elastic_growth_contract() {
        let mut gp = GpExact::elastic(1, MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), -1.0, 3, 2).unwrap();
        assert_eq!(gp.log_marginal(), 0.0);
        assert!(gp.to_string().contains("No observation data"));
        let xs = [0.1, 0.5, -0.3, 1.2, 2.0];
        for (i, &v) in xs.iter().enumerate() {
            gp.append(&DMatrix::from_element(1, 1, v), &[i as f64]).unwrap();
        }
        assert!(gp.capacity() >= 5);
        assert_eq!(gp.x().as_slice(), &xs);
        assert_eq!(gp.y().as_slice(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(gp.append(&DMatrix::zeros(2, 1), &[0.0]).is_err());
    }

    #[test]
    fn summary_block() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let gp = GpExact::fit(x, DVector::from_vec(vec![0.0, 1.0]), MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), -1.0)
            .unwrap();
        let s = gp.to_string();
        assert!(s.starts_with("GP Exact object:\nDim = 1\nNumber of observations = 2\n"));
        assert!(s.contains("Variance of observation noise = 0.1353352832366127"));
        assert!(s.contains("Type: SEIso, Params: [0.0, 0.0]"));
    }

    #[test]
    fn noise_kernel_prior_samples_are_deterministic() {
        let xs = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 2.0]);
        let a = sample_prior(&MeanFunction::Zero, &Kernel::noise(0.0), &xs, 5, 9).unwrap();
        let b = sample_prior(&MeanFunction::Zero, &Kernel::noise(0.0), &xs, 5, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (5, 3));
    }
}
