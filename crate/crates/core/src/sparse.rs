//! Inducing-point approximations: SoR, DTC, FITC and FSA.
//!
//! All four schemes approximate the training covariance as
//! `Σ = Q_ff + Λ` with `Q_ff = Vᵀ V`, `V = L_u⁻¹ K_uf`, and `Λ` equal to
//! `σ²I` (SoR, DTC), `diag(K_ff − Q_ff) + σ²I` (FITC) or the block-diagonal
//! analogue (FSA). With `B = I + V Λ⁻¹ Vᵀ` every quantity follows from the
//! Woodbury and determinant identities at `O(n m²)` cost plus the FSA blocks.

use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};
use crate::exact::LN_2PI;
use crate::kernels::{col, Kernel};
use crate::linalg::{Cholesky, JitterPolicy};
use crate::means::MeanFunction;
use crate::model::{regression_groups, Objective, ParamGroup};
use crate::priors::{Prior, PriorSet};

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    /// Subset of regressors.
    Sor,
    /// Deterministic training conditional.
    Dtc,
    /// Fully independent training conditional.
    Fitc,
    /// Full-scale approximation over a partition of the training indices.
    Fsa { blocks: Vec<Vec<usize>> },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Sor => "SoR",
            Scheme::Dtc => "DTC",
            Scheme::Fitc => "FITC",
            Scheme::Fsa { .. } => "FSA",
        }
    }
}

/// Factorized `Λ`.
#[derive(Debug, Clone)]
enum Lambda {
    Iso(f64),
    Diag(DVector<f64>),
    Blocks(Vec<Cholesky>),
}

#[derive(Debug, Clone)]
pub struct SparseGp {
    scheme: Scheme,
    x: DMatrix<f64>,
    y: DVector<f64>,
    xu: DMatrix<f64>,
    mean: MeanFunction,
    kernel: Kernel,
    log_noise: f64,
    priors: PriorSet,
    /// FSA: block of each training point.
    block_of: Vec<usize>,
    /// FITC: whether `k_ii − q_ii` was positive (not clamped).
    fitc_active: Vec<bool>,
    yc: DVector<f64>,
    lu: Cholesky,
    v: DMatrix<f64>,
    lambda: Lambda,
    /// `Λ⁻¹ Vᵀ`, `n × m`.
    a: DMatrix<f64>,
    lb: Cholesky,
    /// `Λ⁻¹ yᶜ`.
    beta: DVector<f64>,
    /// `B⁻¹ V Λ⁻¹ yᶜ`.
    binv_b: DVector<f64>,
    /// `Σ⁻¹ yᶜ`.
    alpha: DVector<f64>,
    mll: f64,
}

/// Partitions the training points by nearest inducing point (Euclidean
/// distance, ties to the lower index). Empty cells are dropped.
pub fn nearest_inducing_blocks(x: &DMatrix<f64>, xu: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let mut blocks = vec![Vec::new(); xu.ncols()];
    for i in 0..x.ncols() {
        blocks[nearest(col(x, i), xu)].push(i);
    }
    blocks.retain(|b| !b.is_empty());
    blocks
}

fn nearest(p: &[f64], set: &DMatrix<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for j in 0..set.ncols() {
        let d: f64 = p.iter().zip(col(set, j)).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

impl SparseGp {
    pub fn fit(
        scheme: Scheme,
        x: DMatrix<f64>,
        xu: DMatrix<f64>,
        y: DVector<f64>,
        mean: MeanFunction,
        kernel: Kernel,
        log_noise: f64,
    ) -> Result<Self> {
        let n = x.ncols();
        if n == 0 {
            return Err(GpError::input("at least one observation is required"));
        }
        if n != y.len() {
            return Err(GpError::input(format!("{n} inputs but {} responses", y.len())));
        }
        if xu.nrows() != x.nrows() {
            return Err(GpError::input(format!(
                "inducing points have dimension {}, inputs {}",
                xu.nrows(),
                x.nrows()
            )));
        }
        if xu.ncols() == 0 || xu.ncols() > n {
            return Err(GpError::config(format!("need 1 to {n} inducing points, got {}", xu.ncols())));
        }
        if x.iter().chain(y.iter()).chain(xu.iter()).any(|v| !v.is_finite()) {
            return Err(GpError::input("data contain non-finite values"));
        }
        kernel.validate(x.nrows())?;
        mean.validate(x.nrows())?;
        let mut block_of = Vec::new();
        if let Scheme::Fsa { blocks } = &scheme {
            block_of = vec![usize::MAX; n];
            for (b, idx) in blocks.iter().enumerate() {
                if idx.is_empty() {
                    return Err(GpError::config(format!("block {b} is empty")));
                }
                for &i in idx {
                    if i >= n || block_of[i] != usize::MAX {
                        return Err(GpError::config(format!("index {i} is out of range or in two blocks")));
                    }
                    block_of[i] = b;
                }
            }
            if block_of.contains(&usize::MAX) {
                return Err(GpError::config("blocks do not cover every observation"));
            }
        }
        let n_params = 1 + mean.num_params() + kernel.num_params();
        let mut gp = SparseGp {
            scheme,
            x,
            y,
            xu,
            mean,
            kernel,
            log_noise,
            priors: PriorSet::flat(n_params),
            block_of,
            fitc_active: Vec::new(),
            yc: DVector::zeros(0),
            lu: Cholesky::from_factor(DMatrix::zeros(0, 0), 0.0),
            v: DMatrix::zeros(0, 0),
            lambda: Lambda::Iso(1.0),
            a: DMatrix::zeros(0, 0),
            lb: Cholesky::from_factor(DMatrix::zeros(0, 0), 0.0),
            beta: DVector::zeros(0),
            binv_b: DVector::zeros(0),
            alpha: DVector::zeros(0),
            mll: 0.0,
        };
        gp.refresh()?;
        Ok(gp)
    }

    fn blocks(&self) -> &[Vec<usize>] {
        match &self.scheme {
            Scheme::Fsa { blocks } => blocks,
            _ => &[],
        }
    }

    fn refresh(&mut self) -> Result<()> {
        let n = self.x.ncols();
        let m = self.xu.ncols();
        let s2 = self.noise_variance();
        self.yc = &self.y - self.mean.eval_unchecked(&self.x);
        let kuu = self.kernel.gram_unchecked(&self.xu);
        self.lu = Cholesky::factorize(&kuu, JitterPolicy::EXACT)?;
        self.v = self.lu.solve_lower_mat(&self.kernel.cross_unchecked(&self.xu, &self.x));

        self.lambda = match &self.scheme {
            Scheme::Sor | Scheme::Dtc => Lambda::Iso(s2),
            Scheme::Fitc => {
                let kdiag = self.kernel.diag_unchecked(&self.x);
                let mut d = DVector::zeros(n);
                self.fitc_active = vec![false; n];
                for i in 0..n {
                    let gap = kdiag[i] - self.v.column(i).norm_squared();
                    self.fitc_active[i] = gap > 0.0;
                    d[i] = gap.max(0.0) + s2;
                }
                Lambda::Diag(d)
            }
            Scheme::Fsa { blocks } => {
                let mut factors = Vec::with_capacity(blocks.len());
                for idx in blocks {
                    let xb = self.x.select_columns(idx);
                    let vb = self.v.select_columns(idx);
                    let mut lam = self.kernel.gram_unchecked(&xb);
                    lam.gemm_tr(-1.0, &vb, &vb, 1.0);
                    for i in 0..idx.len() {
                        lam[(i, i)] += s2;
                    }
                    factors.push(Cholesky::factorize(&lam, JitterPolicy::EXACT)?);
                }
                Lambda::Blocks(factors)
            }
        };

        self.a = self.lambda_solve(&self.v.transpose());
        let mut b = &self.v * &self.a;
        for i in 0..m {
            b[(i, i)] += 1.0;
        }
        self.lb = Cholesky::factorize(&b, JitterPolicy::EXACT)?;
        self.beta = self.lambda_solve(&DMatrix::from_column_slice(n, 1, self.yc.as_slice())).column(0).into_owned();
        let bvec = &self.v * &self.beta;
        self.binv_b = self.lb.solve(&bvec);
        self.alpha = &self.beta - &self.a * &self.binv_b;

        let quad = self.yc.dot(&self.beta) - bvec.dot(&self.binv_b);
        let logdet = self.lambda_logdet() + self.lb.log_det();
        self.mll = -0.5 * quad - 0.5 * logdet - 0.5 * n as f64 * LN_2PI;
        Ok(())
    }

    /// `Λ⁻¹ R` for an `n`-row right-hand side.
    fn lambda_solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.lambda {
            Lambda::Iso(s2) => rhs / *s2,
            Lambda::Diag(d) => {
                let mut out = rhs.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row /= d[i];
                }
                out
            }
            Lambda::Blocks(factors) => {
                let mut out = rhs.clone();
                for (idx, chol) in self.blocks().iter().zip(factors) {
                    let sol = chol.solve_upper_mat(&chol.solve_lower_mat(&rhs.select_rows(idx)));
                    for (r, &i) in idx.iter().enumerate() {
                        out.row_mut(i).copy_from(&sol.row(r));
                    }
                }
                out
            }
        }
    }

    fn lambda_logdet(&self) -> f64 {
        match &self.lambda {
            Lambda::Iso(s2) => self.x.ncols() as f64 * s2.ln(),
            Lambda::Diag(d) => d.iter().map(|v| v.ln()).sum(),
            Lambda::Blocks(factors) => factors.iter().map(Cholesky::log_det).sum(),
        }
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inducing_points(&self) -> &DMatrix<f64> {
        &self.xu
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn mean(&self) -> &MeanFunction {
        &self.mean
    }

    pub fn log_noise(&self) -> f64 {
        self.log_noise
    }

    pub fn noise_variance(&self) -> f64 {
        (2.0 * self.log_noise).exp()
    }

    pub fn log_marginal(&self) -> f64 {
        self.mll
    }

    pub fn num_params(&self) -> usize {
        1 + self.mean.num_params() + self.kernel.num_params()
    }

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

    pub fn set_priors(&mut self, group: ParamGroup, priors: &[Prior]) -> Result<()> {
        let nm = self.mean.num_params();
        let range = match group {
            ParamGroup::Noise => 0..1,
            ParamGroup::Mean => 1..1 + nm,
            ParamGroup::Kernel => 1 + nm..self.num_params(),
            other => return Err(GpError::config(format!("sparse GPs have no {other:?} parameters"))),
        };
        self.priors.assign(range, priors)
    }

    /// Gradient of the approximate log marginal likelihood over
    /// `(log σ, mean, kernel)`.
    pub fn grad_log_marginal(&self) -> Vec<f64> {
        let n = self.len();
        let s2 = self.noise_variance();
        // Σ⁻¹ = Λ⁻¹ − U Uᵀ with Uᵀ = L_B⁻¹ Aᵀ.
        let ut = self.lb.solve_lower_mat(&self.a.transpose());

        let lambda_inv_trace = match &self.lambda {
            Lambda::Iso(s2) => n as f64 / s2,
            Lambda::Diag(d) => d.iter().map(|v| 1.0 / v).sum(),
            Lambda::Blocks(factors) => factors.iter().map(|c| c.inverse().trace()).sum(),
        };
        let mut grad = vec![s2 * (self.alpha.norm_squared() - lambda_inv_trace + ut.norm_squared())];
        grad.extend((self.mean.grad_unchecked(&self.x) * &self.alpha).iter());

        // With M = ααᵀ − Σ⁻¹ the kernel gradient is ½ tr(M ∂Σ), where
        // ∂Σ = ∂Q off the corrected blocks and ∂K on them, and
        // ∂Q = ∂K_fu R + Rᵀ ∂K_uf − Rᵀ ∂K_uu R with R = K_uu⁻¹ K_uf.
        let rt = self.lu.solve_upper_mat(&self.v).transpose();
        let ra = rt.tr_mul(&self.alpha);
        let mut p = self.lambda_solve(&rt);
        p.gemm(-1.0, &ut.transpose(), &(&ut * &rt), 1.0);
        p.neg_mut();
        p.ger(1.0, &self.alpha, &ra, 1.0);

        let mut kgrad = vec![0.0; self.kernel.num_params()];
        let mut buf = vec![0.0; self.kernel.num_params()];
        match &self.lambda {
            Lambda::Iso(_) => {}
            Lambda::Diag(d) => {
                for i in 0..n {
                    if !self.fitc_active[i] {
                        continue;
                    }
                    let mii = self.alpha[i] * self.alpha[i] - 1.0 / d[i] + ut.column(i).norm_squared();
                    let xi = col(&self.x, i);
                    self.kernel.grad_into(xi, xi, &mut buf);
                    for (g, b) in kgrad.iter_mut().zip(&buf) {
                        *g += 0.5 * mii * b;
                    }
                    let row = rt.row(i) * mii;
                    let mut prow = p.row_mut(i);
                    prow -= row;
                }
            }
            Lambda::Blocks(factors) => {
                for (idx, chol) in self.blocks().iter().zip(factors) {
                    let ab = DVector::from_fn(idx.len(), |r, _| self.alpha[idx[r]]);
                    let ub = ut.select_columns(idx);
                    let mut mbb = chol.inverse();
                    mbb.neg_mut();
                    mbb.ger(1.0, &ab, &ab, 1.0);
                    mbb.gemm_tr(1.0, &ub, &ub, 1.0);
                    let xb = self.x.select_columns(idx);
                    for (g, b) in kgrad.iter_mut().zip(self.kernel.grad_contract_sym(&xb, &mbb)) {
                        *g += 0.5 * b;
                    }
                    let corr = &mbb * rt.select_rows(idx);
                    for (r, &i) in idx.iter().enumerate() {
                        let mut prow = p.row_mut(i);
                        prow -= corr.row(r);
                    }
                }
            }
        }
        let rwr = rt.tr_mul(&p);
        let rwr = 0.5 * (&rwr + rwr.transpose());
        let cross = self.kernel.grad_contract_cross(&self.x, &self.xu, &p);
        let uu = self.kernel.grad_contract_sym(&self.xu, &rwr);
        for j in 0..kgrad.len() {
            kgrad[j] += cross[j] - 0.5 * uu[j];
        }
        grad.extend(kgrad);
        grad
    }

    /// Latent predictive mean and variance at the columns of `xs`. FSA
    /// assigns each test point to the block of its nearest training point.
    pub fn predict_f(&self, xs: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if xs.nrows() != self.x.nrows() {
            return Err(GpError::input(format!(
                "test inputs have dimension {}, expected {}",
                xs.nrows(),
                self.x.nrows()
            )));
        }
        let k = xs.ncols();
        let vs = self.lu.solve_lower_mat(&self.kernel.cross_unchecked(&self.xu, xs));
        let mut mean = self.mean.eval_unchecked(xs) + vs.tr_mul(&self.binv_b);
        let mut var = DVector::zeros(k);

        match (&self.scheme, &self.lambda) {
            (Scheme::Sor, _) => {
                let w = self.lb.solve_lower_mat(&vs);
                for j in 0..k {
                    var[j] = w.column(j).norm_squared();
                }
            }
            (Scheme::Fsa { blocks }, Lambda::Blocks(factors)) => {
                let kss = self.kernel.diag_unchecked(xs);
                for j in 0..k {
                    let b = self.block_of[nearest(col(xs, j), &self.x)];
                    let idx = &blocks[b];
                    let vj = vs.column(j);
                    let xb = self.x.select_columns(idx);
                    let kb = self.kernel.cross_unchecked(&xb, &xs.columns(j, 1).into_owned()).column(0).into_owned();
                    let d = kb - self.v.select_columns(idx).tr_mul(&vj);
                    let ld = factors[b].solve(&d);
                    let g = self.a.select_rows(idx).tr_mul(&d);
                    let h = d.dot(&ld);
                    let beta_b = DVector::from_fn(idx.len(), |r, _| self.beta[idx[r]]);
                    let vg = vj - &g;
                    mean[j] += d.dot(&beta_b) - g.dot(&self.binv_b);
                    let w = self.lb.solve_lower(&vg);
                    var[j] = (kss[j] - vj.norm_squared() - h + w.norm_squared()).max(0.0);
                }
            }
            _ => {
                let kss = self.kernel.diag_unchecked(xs);
                let w = self.lb.solve_lower_mat(&vs);
                for j in 0..k {
                    var[j] = (kss[j] - vs.column(j).norm_squared() + w.column(j).norm_squared()).max(0.0);
                }
            }
        }
        Ok((mean, var))
    }

    pub fn predict_y(&self, xs: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let (mean, var) = self.predict_f(xs)?;
        Ok((mean, var.add_scalar(self.noise_variance())))
    }

    /// Approximate heap footprint of the fitted factors in bytes.
    pub fn memory_bytes(&self) -> usize {
        let n = self.len();
        let m = self.xu.ncols();
        let d = self.x.nrows();
        let lambda = match &self.lambda {
            Lambda::Iso(_) => 1,
            Lambda::Diag(_) => n,
            Lambda::Blocks(f) => f.iter().map(|c| c.dim() * c.dim()).sum(),
        };
        8 * (d * (n + m) + 5 * n + 2 * n * m + 2 * m * m + lambda)
    }
}

impl Objective for SparseGp {
    fn params(&self) -> Vec<f64> {
        SparseGp::params(self)
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        SparseGp::set_params(self, params)
    }

    fn param_groups(&self) -> Vec<ParamGroup> {
        regression_groups(self.mean.num_params(), self.kernel.num_params())
    }

    fn log_marginal(&self) -> f64 {
        self.mll
    }

    fn grad_log_marginal(&self) -> Vec<f64> {
        SparseGp::grad_log_marginal(self)
    }

    fn priors(&self) -> &PriorSet {
        &self.priors
    }
}
