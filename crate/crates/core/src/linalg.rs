//! Dense linear algebra shared by the exact, Monte Carlo and sparse models.
//!
//! Everything here works on lower Cholesky factors stored as full
//! `DMatrix<f64>` with a zeroed upper triangle. The factorization and the
//! triangular solves are blocked so that the bulk of the work goes through
//! `gemm`.

use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};

const BLOCK: usize = 64;

/// Jitter escalation schedule, expressed relative to the mean diagonal of the
/// matrix being factorized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterPolicy {
    /// Jitter added before the first attempt (0 means try the matrix as is).
    pub always: f64,
    /// First jitter tried after a failed factorization.
    pub start: f64,
    /// Largest jitter tried before giving up.
    pub cap: f64,
}

impl JitterPolicy {
    /// Exact regression: the noise term already regularizes, so start clean.
    pub const EXACT: JitterPolicy = JitterPolicy { always: 0.0, start: 1e-10, cap: 1e-4 };
    /// Latent-function factors carry no noise term, so jitter is mandatory.
    pub const LATENT: JitterPolicy = JitterPolicy { always: 1e-8, start: 1e-8, cap: 1e-4 };
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy::EXACT
    }
}

/// Lower Cholesky factor together with the absolute jitter that was added to
/// the diagonal to obtain it.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: DMatrix<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factorizes `a`, escalating the diagonal jitter per `policy` on failure.
    pub fn factorize(a: &DMatrix<f64>, policy: JitterPolicy) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(GpError::input(format!("cannot factorize a {}x{} matrix", n, a.ncols())));
        }
        let scale = if n == 0 { 1.0 } else { (a.trace() / n as f64).abs().max(f64::MIN_POSITIVE) };

        let mut jitter = policy.always * scale;
        let cap = policy.cap * scale;
        let mut rel = policy.start;
        loop {
            let mut work = a.clone();
            if jitter > 0.0 {
                for i in 0..n {
                    work[(i, i)] += jitter;
                }
            }
            if cholesky_in_place(&mut work).is_ok() {
                return Ok(Cholesky { l: work, jitter });
            }
            if jitter >= cap {
                return Err(GpError::Numerical {
                    message: format!("{n}x{n} covariance matrix is not positive definite"),
                    jitter,
                });
            }
            jitter = (rel * scale).max(jitter * 2.0).min(cap);
            rel *= 2.0;
        }
    }

    /// Wraps an existing lower factor.
    pub fn from_factor(l: DMatrix<f64>, jitter: f64) -> Self {
        Cholesky { l, jitter }
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `log |A|` where `A = L Lᵀ`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        forward_sub(&self.l, x.as_mut_slice());
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        backward_sub_t(&self.l, x.as_mut_slice());
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        forward_sub(&self.l, x.as_mut_slice());
        backward_sub_t(&self.l, x.as_mut_slice());
        x
    }

    /// Solves `L X = B` for a matrix right-hand side.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        solve_lower_in_place(&self.l, &mut x);
        x
    }

    /// Solves `Lᵀ X = B` for a matrix right-hand side.
    pub fn solve_upper_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        solve_upper_t_in_place(&self.l, &mut x);
        x
    }

    /// Explicit `A⁻¹`, formed as `L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut linv = DMatrix::identity(n, n);
        solve_lower_in_place(&self.l, &mut linv);
        linv.tr_mul(&linv)
    }

    /// Appends one row/column to the factorized matrix. `cross` holds the new
    /// column's entries against the existing rows and `diag` its diagonal.
    /// Costs one triangular solve.
    pub fn extend(&mut self, cross: &DVector<f64>, diag: f64) -> Result<()> {
        let n = self.dim();
        let row = self.solve_lower(cross);
        let pivot = diag + self.jitter - row.norm_squared();
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(GpError::Numerical {
                message: format!("rank-one extension to size {} lost positive definiteness", n + 1),
                jitter: self.jitter,
            });
        }
        let mut l = std::mem::replace(&mut self.l, DMatrix::zeros(0, 0)).resize(n + 1, n + 1, 0.0);
        for j in 0..n {
            l[(n, j)] = row[j];
        }
        l[(n, n)] = pivot.sqrt();
        self.l = l;
        Ok(())
    }
}

/// In-place blocked lower Cholesky. On success the upper triangle is zeroed;
/// on failure returns the index of the first non-positive pivot.
pub fn cholesky_in_place(a: &mut DMatrix<f64>) -> std::result::Result<(), usize> {
    let n = a.nrows();
    let mut j0 = 0;
    while j0 < n {
        let j1 = (j0 + BLOCK).min(n);
        let nb = j1 - j0;
        if j0 > 0 {
            // Subtract the contribution of the already factorized columns from
            // the current panel (rows j0..n, columns j0..j1).
            let (done, mut panel) = a.columns_range_pair_mut(0..j0, j0..j1);
            let left = done.rows(j0, n - j0);
            let top = done.rows(j0, nb).transpose();
            let mut target = panel.rows_mut(j0, n - j0);
            target.gemm(-1.0, &left, &top, 1.0);
        }
        // Unblocked factorization of the diagonal block.
        for j in j0..j1 {
            let mut d = a[(j, j)];
            for k in j0..j {
                d -= a[(j, k)] * a[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(j);
            }
            let d = d.sqrt();
            a[(j, j)] = d;
            for i in (j + 1)..j1 {
                let mut s = a[(i, j)];
                for k in j0..j {
                    s -= a[(i, k)] * a[(j, k)];
                }
                a[(i, j)] = s / d;
            }
        }
        // Rows below the block: X Dᵀ = B, one forward substitution per row.
        for i in j1..n {
            for j in j0..j1 {
                let mut s = a[(i, j)];
                for k in j0..j {
                    s -= a[(i, k)] * a[(j, k)];
                }
                a[(i, j)] = s / a[(j, j)];
            }
        }
        j0 = j1;
    }
    for j in 1..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(())
}

fn forward_sub(l: &DMatrix<f64>, x: &mut [f64]) {
    let n = l.nrows();
    for j in 0..n {
        let xj = x[j] / l[(j, j)];
        x[j] = xj;
        if xj != 0.0 {
            let col = &l.as_slice()[j * n..(j + 1) * n];
            for i in (j + 1)..n {
                x[i] -= col[i] * xj;
            }
        }
    }
}

fn backward_sub_t(l: &DMatrix<f64>, x: &mut [f64]) {
    let n = l.nrows();
    for j in (0..n).rev() {
        let col = &l.as_slice()[j * n..(j + 1) * n];
        let mut s = x[j];
        for i in (j + 1)..n {
            s -= col[i] * x[i];
        }
        x[j] = s / col[j];
    }
}

/// Solves `L X = B` in place, blocked over rows of `B`.
pub fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    let m = b.ncols();
    let mut i0 = 0;
    while i0 < n {
        let i1 = (i0 + BLOCK).min(n);
        let nb = i1 - i0;
        if i0 > 0 {
            let (solved, mut current) = b.rows_range_pair_mut(0..i0, i0..i1);
            let lblk = l.view((i0, 0), (nb, i0));
            current.gemm(-1.0, &lblk, &solved, 1.0);
        }
        for c in 0..m {
            for i in i0..i1 {
                let mut s = b[(i, c)];
                for k in i0..i {
                    s -= l[(i, k)] * b[(k, c)];
                }
                b[(i, c)] = s / l[(i, i)];
            }
        }
        i0 = i1;
    }
}

/// Solves `Lᵀ X = B` in place, blocked over rows of `B` from the bottom.
pub fn solve_upper_t_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    let m = b.ncols();
    let mut i1 = n;
    while i1 > 0 {
        let i0 = i1.saturating_sub(BLOCK);
        let nb = i1 - i0;
        if i1 < n {
            let (mut current, solved) = b.rows_range_pair_mut(i0..i1, i1..n);
            let lblk = l.view((i1, i0), (n - i1, nb));
            current.gemm_tr(-1.0, &lblk, &solved, 1.0);
        }
        for c in 0..m {
            for i in (i0..i1).rev() {
                let mut s = b[(i, c)];
                for k in (i + 1)..i1 {
                    s -= l[(k, i)] * b[(k, c)];
                }
                b[(i, c)] = s / l[(i, i)];
            }
        }
        i1 = i0;
    }
}

/// `Φ(X)`: lower triangle of `X` with the diagonal halved.
pub fn phi(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => x[(i, j)],
        std::cmp::Ordering::Equal => 0.5 * x[(i, j)],
        std::cmp::Ordering::Less => 0.0,
    })
}

/// Directional derivative of the Cholesky factor, unblocked:
/// `dL = L Φ(L⁻¹ dA L⁻ᵀ)`. `da` must be symmetric.
pub fn chol_derivative_dense(l: &DMatrix<f64>, da: &DMatrix<f64>) -> DMatrix<f64> {
    let mut tmp = da.clone();
    solve_lower_in_place(l, &mut tmp);
    let mut inner = tmp.transpose();
    solve_lower_in_place(l, &mut inner);
    l * phi(&inner)
}

/// Blocked forward-mode derivative of the Cholesky factor.
///
/// Given `A = L Lᵀ` and a symmetric perturbation `dA`, returns `dL` with
/// `dL Lᵀ + L dLᵀ = dA` and `dL` lower triangular. The factor is processed in
/// column blocks of width `block`: each diagonal block uses the dense
/// `Φ` formula, the panel below it one triangular solve.
pub fn chol_derivative_blocked(l: &DMatrix<f64>, da: &DMatrix<f64>, block: usize) -> DMatrix<f64> {
    let n = l.nrows();
    let block = block.max(1);
    let mut dl = DMatrix::<f64>::zeros(n, n);
    let mut j0 = 0;
    while j0 < n {
        let j1 = (j0 + block).min(n);
        let nb = j1 - j0;
        let rest = n - j1;

        // L = [R D 0; B C *], rows split at j0/j1, columns at j0/j1.
        let r = l.view((j0, 0), (nb, j0));
        let d = l.view((j0, j0), (nb, nb)).into_owned();
        let r_dot = dl.view((j0, 0), (nb, j0)).into_owned();

        // Diagonal block: D dDᵀ + dD Dᵀ = dA_JJ − (dR Rᵀ + R dRᵀ).
        let mut s = da.view((j0, j0), (nb, nb)).into_owned();
        if j0 > 0 {
            let t = &r_dot * r.transpose();
            s -= &t + t.transpose();
        }
        let d_dot = chol_derivative_dense(&d, &s);
        dl.view_mut((j0, j0), (nb, nb)).copy_from(&d_dot);

        if rest > 0 {
            // Panel: dC = (dA_KJ − dB Rᵀ − B dRᵀ − C dDᵀ) D⁻ᵀ.
            let mut rhs = da.view((j1, j0), (rest, nb)).into_owned();
            if j0 > 0 {
                let b = l.view((j1, 0), (rest, j0));
                let b_dot = dl.view((j1, 0), (rest, j0)).into_owned();
                rhs.gemm(-1.0, &b_dot, &r.transpose(), 1.0);
                rhs.gemm(-1.0, &b, &r_dot.transpose(), 1.0);
            }
            let c = l.view((j1, j0), (rest, nb));
            rhs.gemm(-1.0, &c, &d_dot.transpose(), 1.0);
            // X Dᵀ = rhs  <=>  D Xᵀ = rhsᵀ.
            let mut xt = rhs.transpose();
            solve_lower_in_place(&d, &mut xt);
            dl.view_mut((j1, j0), (rest, nb)).copy_from(&xt.transpose());
        }
        j0 = j1;
    }
    dl
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * (n as f64) * 0.1
    }

    fn random_sym(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a + a.transpose()
    }

    #[test]
    fn blocked_cholesky_reconstructs() {
        for &n in &[1usize, 5, 63, 64, 65, 150] {
            let a = random_spd(n, n as u64);
            let c = Cholesky::factorize(&a, JitterPolicy::EXACT).unwrap();
            assert_eq!(c.jitter(), 0.0);
            let rec = c.factor() * c.factor().transpose();
            assert!((rec - &a).amax() < 1e-10 * a.amax(), "n = {n}");
            let reference = a.clone().cholesky().unwrap().l();
            assert!((c.factor() - reference).amax() < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        let a = DMatrix::from_element(3, 3, 1.0);
        let c = Cholesky::factorize(&a, JitterPolicy::EXACT).unwrap();
        assert!(c.jitter() > 0.0 && c.jitter() <= 1e-4);
    }

    #[test]
    fn indefinite_matrix_fails_with_jitter_report() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match Cholesky::factorize(&a, JitterPolicy::EXACT) {
            Err(GpError::Numerical { jitter, .. }) => assert!(jitter > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn triangular_solves_and_inverse() {
        let n = 130;
        let a = random_spd(n, 7);
        let c = Cholesky::factorize(&a, JitterPolicy::EXACT).unwrap();
        let b = DMatrix::from_fn(n, 3, |i, j| (i as f64 * 0.37 + j as f64).sin());
        let x = c.solve_lower_mat(&b);
        assert!((c.factor() * &x - &b).amax() < 1e-10);
        let y = c.solve_upper_mat(&b);
        assert!((c.factor().transpose() * &y - &b).amax() < 1e-10);
        let inv = c.inverse();
        assert!((&a * inv - DMatrix::<f64>::identity(n, n)).amax() < 1e-9);
        let v = b.column(0).into_owned();
        assert!((&a * c.solve(&v) - &v).amax() < 1e-9);
        let logdet = a.clone().lu().determinant().ln();
        assert!((c.log_det() - logdet).abs() < 1e-9);
    }

    #[test]
    fn extend_matches_refactorization() {
        let a = random_spd(20, 3);
        let mut c = Cholesky::factorize(&a.view((0, 0), (19, 19)).into_owned(), JitterPolicy::EXACT).unwrap();
        let cross = a.view((0, 19), (19, 1)).into_owned().column(0).into_owned();
        c.extend(&cross, a[(19, 19)]).unwrap();
        let full = Cholesky::factorize(&a, JitterPolicy::EXACT).unwrap();
        assert!((c.factor() - full.factor()).amax() < 1e-12);
    }

    #[test]
    fn blocked_derivative_matches_dense_and_finite_differences() {
        let n = 23;
        let a = random_spd(n, 11);
        let da = random_sym(n, 12);
        let l = Cholesky::factorize(&a, JitterPolicy::EXACT).unwrap().factor().clone();
        let dense = chol_derivative_dense(&l, &da);
        for block in [1, 4, 7, 23, 64] {
            let blocked = chol_derivative_blocked(&l, &da, block);
            assert!((&blocked - &dense).amax() < 1e-10, "block {block}");
        }
        // Central finite differences of the factorization itself.
        let h = 1e-6;
        let lp = Cholesky::factorize(&(&a + &da * h), JitterPolicy::EXACT).unwrap().factor().clone();
        let lm = Cholesky::factorize(&(&a - &da * h), JitterPolicy::EXACT).unwrap().factor().clone();
        let fd = (lp - lm) / (2.0 * h);
        assert!((fd - &dense).amax() < 1e-6);
        // Defining identity.
        let lhs = &dense * l.transpose() + &l * dense.transpose();
        assert!((lhs - &da).amax() < 1e-10);
    }
}
