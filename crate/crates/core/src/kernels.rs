//! Covariance functions.
//!
//! A [`Kernel`] is an expression tree: leaves are the standard covariance
//! families, interior nodes are sums, products, parameter masks ([`Kernel::Fixed`])
//! and input-dimension masks ([`Kernel::Masked`]). All trainable
//! hyperparameters are stored on the log scale, and the flattened parameter
//! vector is ordered depth-first, left to right.
//!
//! Inputs are stored column-wise: a `d × n` matrix holds `n` points of
//! dimension `d`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};
use crate::linalg::{Cholesky, JitterPolicy};

/// Length-scale parameterization of a stationary or linear kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum LengthScale {
    /// One shared `log ℓ`.
    Iso(f64),
    /// One `log ℓ_i` per input dimension.
    Ard(Vec<f64>),
}

impl LengthScale {
    fn len(&self) -> usize {
        match self {
            LengthScale::Iso(_) => 1,
            LengthScale::Ard(v) => v.len(),
        }
    }

    fn is_ard(&self) -> bool {
        matches!(self, LengthScale::Ard(_))
    }

    fn push(&self, out: &mut Vec<f64>) {
        match self {
            LengthScale::Iso(l) => out.push(*l),
            LengthScale::Ard(v) => out.extend_from_slice(v),
        }
    }

    fn read(&mut self, src: &[f64]) -> usize {
        match self {
            LengthScale::Iso(l) => {
                *l = src[0];
                1
            }
            LengthScale::Ard(v) => {
                let n = v.len();
                v.copy_from_slice(&src[..n]);
                n
            }
        }
    }
}

/// Smoothness of a Matérn kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaternOrder {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternOrder {
    pub fn as_ratio(self) -> &'static str {
        match self {
            MaternOrder::Half => "1/2",
            MaternOrder::ThreeHalves => "3/2",
            MaternOrder::FiveHalves => "5/2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `σ²`.
    Const { log_sigma: f64 },
    /// `xᵀ L⁻² x'`, no amplitude (compose with `Const` for one).
    Lin { ls: LengthScale },
    Matern { order: MaternOrder, ls: LengthScale, log_sigma: f64 },
    /// Squared exponential.
    SE { ls: LengthScale, log_sigma: f64 },
    Periodic { log_ell: f64, log_sigma: f64, log_p: f64 },
    /// `σ² (xᵀx' + c)^degree`; the degree is structural.
    Poly { log_c: f64, log_sigma: f64, degree: u32 },
    /// `σ² δ(x − x')`, with `δ` testing exact coordinate equality.
    Noise { log_sigma: f64 },
    /// Rational quadratic.
    RQ { ls: LengthScale, log_sigma: f64, log_alpha: f64 },
    /// Exposes only the parameters of `inner` whose `free` flag is set.
    Fixed { inner: Box<Kernel>, free: Vec<bool> },
    /// Evaluates `inner` on the listed (zero-based) input dimensions.
    Masked { inner: Box<Kernel>, dims: Vec<usize> },
    Sum(Vec<Kernel>),
    Product(Vec<Kernel>),
}

/// Symmetric covariance matrix plus the diagonal jitter its factorization
/// needed.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub jitter_applied: f64,
}

impl GramMatrix {
    /// Factorizes the matrix and records the jitter that was required.
    pub fn factorize(&mut self, policy: JitterPolicy) -> Result<Cholesky> {
        let chol = Cholesky::factorize(&self.values, policy)?;
        self.jitter_applied = chol.jitter();
        Ok(chol)
    }
}

/// A point, optionally seen through a dimension mask.
#[derive(Clone, Copy)]
struct Pt<'a> {
    data: &'a [f64],
    dims: Option<&'a [usize]>,
}

impl<'a> Pt<'a> {
    #[inline]
    fn dim(&self) -> usize {
        self.dims.map_or(self.data.len(), |d| d.len())
    }

    #[inline]
    fn at(&self, i: usize) -> f64 {
        match self.dims {
            Some(d) => self.data[d[i]],
            None => self.data[i],
        }
    }
}

#[inline]
fn dot(x: Pt, y: Pt) -> f64 {
    (0..x.dim()).map(|i| x.at(i) * y.at(i)).sum()
}

#[inline]
fn sq_dist(x: Pt, y: Pt) -> f64 {
    (0..x.dim())
        .map(|i| {
            let d = x.at(i) - y.at(i);
            d * d
        })
        .sum()
}

/// Scaled squared distance `Σ (x_i − y_i)² / ℓ_i²`.
#[inline]
fn scaled_sq_dist(ls: &LengthScale, x: Pt, y: Pt) -> f64 {
    match ls {
        LengthScale::Iso(l) => sq_dist(x, y) * (-2.0 * l).exp(),
        LengthScale::Ard(v) => (0..x.dim())
            .map(|i| {
                let d = (x.at(i) - y.at(i)) * (-v[i]).exp();
                d * d
            })
            .sum(),
    }
}

/// Profile `g(r²)` of a stationary kernel `σ² g(r²)` and `−2 g'(r²)`.
#[inline]
fn profile(kind: Stationary, r2: f64) -> (f64, f64) {
    match kind {
        Stationary::SE => {
            let g = (-0.5 * r2).exp();
            (g, g)
        }
        Stationary::RQ(alpha) => {
            let u = 1.0 + r2 / (2.0 * alpha);
            let g = u.powf(-alpha);
            (g, g / u)
        }
        Stationary::Matern(MaternOrder::Half) => {
            let r = r2.sqrt();
            let g = (-r).exp();
            // Non-differentiable at r = 0; use the symmetric subgradient.
            (g, if r > 0.0 { g / r } else { 0.0 })
        }
        Stationary::Matern(MaternOrder::ThreeHalves) => {
            let s = (3.0 * r2).sqrt();
            let e = (-s).exp();
            ((1.0 + s) * e, 3.0 * e)
        }
        Stationary::Matern(MaternOrder::FiveHalves) => {
            let s = (5.0 * r2).sqrt();
            let e = (-s).exp();
            ((1.0 + s + 5.0 * r2 / 3.0) * e, 5.0 / 3.0 * (1.0 + s) * e)
        }
    }
}

#[derive(Clone, Copy)]
enum Stationary {
    SE,
    RQ(f64),
    Matern(MaternOrder),
}

impl Kernel {
    pub fn se_iso(log_ell: f64, log_sigma: f64) -> Self {
        Kernel::SE { ls: LengthScale::Iso(log_ell), log_sigma }
    }

    pub fn se_ard(log_ell: Vec<f64>, log_sigma: f64) -> Self {
        Kernel::SE { ls: LengthScale::Ard(log_ell), log_sigma }
    }

    pub fn matern_iso(order: MaternOrder, log_ell: f64, log_sigma: f64) -> Self {
        Kernel::Matern { order, ls: LengthScale::Iso(log_ell), log_sigma }
    }

    pub fn matern_ard(order: MaternOrder, log_ell: Vec<f64>, log_sigma: f64) -> Self {
        Kernel::Matern { order, ls: LengthScale::Ard(log_ell), log_sigma }
    }

    pub fn rq_iso(log_ell: f64, log_sigma: f64, log_alpha: f64) -> Self {
        Kernel::RQ { ls: LengthScale::Iso(log_ell), log_sigma, log_alpha }
    }

    pub fn rq_ard(log_ell: Vec<f64>, log_sigma: f64, log_alpha: f64) -> Self {
        Kernel::RQ { ls: LengthScale::Ard(log_ell), log_sigma, log_alpha }
    }

    pub fn lin_iso(log_ell: f64) -> Self {
        Kernel::Lin { ls: LengthScale::Iso(log_ell) }
    }

    pub fn lin_ard(log_ell: Vec<f64>) -> Self {
        Kernel::Lin { ls: LengthScale::Ard(log_ell) }
    }

    pub fn periodic(log_ell: f64, log_sigma: f64, log_p: f64) -> Self {
        Kernel::Periodic { log_ell, log_sigma, log_p }
    }

    pub fn poly(log_c: f64, log_sigma: f64, degree: u32) -> Self {
        Kernel::Poly { log_c, log_sigma, degree }
    }

    pub fn noise(log_sigma: f64) -> Self {
        Kernel::Noise { log_sigma }
    }

    pub fn constant(log_sigma: f64) -> Self {
        Kernel::Const { log_sigma }
    }

    /// Freezes the parameters whose mask entry is `false`.
    pub fn fixed(inner: Kernel, free: Vec<bool>) -> Result<Self> {
        if free.len() != inner.num_params() {
            return Err(GpError::config(format!(
                "fixed-parameter mask has {} entries but the kernel has {} parameters",
                free.len(),
                inner.num_params()
            )));
        }
        Ok(Kernel::Fixed { inner: Box::new(inner), free })
    }

    /// Freezes every parameter.
    pub fn fix_all(inner: Kernel) -> Self {
        let free = vec![false; inner.num_params()];
        Kernel::Fixed { inner: Box::new(inner), free }
    }

    pub fn masked(inner: Kernel, dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(GpError::config("masked kernel needs at least one active dimension"));
        }
        Ok(Kernel::Masked { inner: Box::new(inner), dims })
    }

    /// Human-readable node type, as printed in model summaries.
    pub fn type_name(&self) -> String {
        let suffix = |ls: &LengthScale| if ls.is_ard() { "Ard" } else { "Iso" };
        match self {
            Kernel::Const { .. } => "Const".into(),
            Kernel::Lin { ls } => format!("Lin{}", suffix(ls)),
            Kernel::Matern { order, ls, .. } => {
                let tag = match order {
                    MaternOrder::Half => "12",
                    MaternOrder::ThreeHalves => "32",
                    MaternOrder::FiveHalves => "52",
                };
                format!("Mat{tag}{}", suffix(ls))
            }
            Kernel::SE { ls, .. } => format!("SE{}", suffix(ls)),
            Kernel::Periodic { .. } => "Periodic".into(),
            Kernel::Poly { .. } => "Poly".into(),
            Kernel::Noise { .. } => "Noise".into(),
            Kernel::RQ { ls, .. } => format!("RQ{}", suffix(ls)),
            Kernel::Fixed { .. } => "FixedKernel".into(),
            Kernel::Masked { .. } => "Masked".into(),
            Kernel::Sum(_) => "SumKernel".into(),
            Kernel::Product(_) => "ProdKernel".into(),
        }
    }

    // ---------------------------------------------------------------------
    // Parameters

    pub fn num_params(&self) -> usize {
        match self {
            Kernel::Const { .. } | Kernel::Noise { .. } => 1,
            Kernel::Lin { ls } => ls.len(),
            Kernel::Matern { ls, .. } | Kernel::SE { ls, .. } => ls.len() + 1,
            Kernel::Periodic { .. } => 3,
            Kernel::Poly { .. } => 2,
            Kernel::RQ { ls, .. } => ls.len() + 2,
            Kernel::Fixed { free, .. } => free.iter().filter(|f| **f).count(),
            Kernel::Masked { inner, .. } => inner.num_params(),
            Kernel::Sum(ks) | Kernel::Product(ks) => ks.iter().map(Kernel::num_params).sum(),
        }
    }

    /// Flattened log-scale parameters, depth-first.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.push_params(&mut out);
        out
    }

    fn push_params(&self, out: &mut Vec<f64>) {
        match self {
            Kernel::Const { log_sigma } | Kernel::Noise { log_sigma } => out.push(*log_sigma),
            Kernel::Lin { ls } => ls.push(out),
            Kernel::Matern { ls, log_sigma, .. } | Kernel::SE { ls, log_sigma } => {
                ls.push(out);
                out.push(*log_sigma);
            }
            Kernel::Periodic { log_ell, log_sigma, log_p } => out.extend([*log_ell, *log_sigma, *log_p]),
            Kernel::Poly { log_c, log_sigma, .. } => out.extend([*log_c, *log_sigma]),
            Kernel::RQ { ls, log_sigma, log_alpha } => {
                ls.push(out);
                out.extend([*log_sigma, *log_alpha]);
            }
            Kernel::Fixed { inner, free } => {
                out.extend(inner.params().into_iter().zip(free).filter(|(_, f)| **f).map(|(p, _)| p));
            }
            Kernel::Masked { inner, .. } => inner.push_params(out),
            Kernel::Sum(ks) | Kernel::Product(ks) => ks.iter().for_each(|k| k.push_params(out)),
        }
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(GpError::config(format!(
                "kernel expects {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        self.read_params(params);
        Ok(())
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        match self {
            Kernel::Const { log_sigma } | Kernel::Noise { log_sigma } => {
                *log_sigma = src[0];
                1
            }
            Kernel::Lin { ls } => ls.read(src),
            Kernel::Matern { ls, log_sigma, .. } | Kernel::SE { ls, log_sigma } => {
                let n = ls.read(src);
                *log_sigma = src[n];
                n + 1
            }
            Kernel::Periodic { log_ell, log_sigma, log_p } => {
                *log_ell = src[0];
                *log_sigma = src[1];
                *log_p = src[2];
                3
            }
            Kernel::Poly { log_c, log_sigma, .. } => {
                *log_c = src[0];
                *log_sigma = src[1];
                2
            }
            Kernel::RQ { ls, log_sigma, log_alpha } => {
                let n = ls.read(src);
                *log_sigma = src[n];
                *log_alpha = src[n + 1];
                n + 2
            }
            Kernel::Fixed { inner, free } => {
                let mut all = inner.params();
                let mut used = 0;
                for (p, f) in all.iter_mut().zip(free.iter()) {
                    if *f {
                        *p = src[used];
                        used += 1;
                    }
                }
                inner.read_params(&all);
                used
            }
            Kernel::Masked { inner, .. } => inner.read_params(src),
            Kernel::Sum(ks) | Kernel::Product(ks) => {
                let mut used = 0;
                for k in ks.iter_mut() {
                    used += k.read_params(&src[used..]);
                }
                used
            }
        }
    }

    /// Parameter labels in flattening order, e.g. `SE log length`.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.push_names(&mut out);
        out
    }

    fn push_names(&self, out: &mut Vec<String>) {
        let ls_names = |prefix: &str, ls: &LengthScale, out: &mut Vec<String>| match ls {
            LengthScale::Iso(_) => out.push(format!("{prefix} log length")),
            LengthScale::Ard(v) => out.extend((1..=v.len()).map(|i| format!("{prefix} log length {i}"))),
        };
        match self {
            Kernel::Const { .. } => out.push("Const log scale".into()),
            Kernel::Noise { .. } => out.push("Noise log scale".into()),
            Kernel::Lin { ls } => ls_names("Lin", ls, out),
            Kernel::Matern { order, ls, .. } => {
                let prefix = format!("Matern{}", order.as_ratio());
                ls_names(&prefix, ls, out);
                out.push(format!("{prefix} log scale"));
            }
            Kernel::SE { ls, .. } => {
                ls_names("SE", ls, out);
                out.push("SE log scale".into());
            }
            Kernel::Periodic { .. } => {
                out.extend(["Periodic log length", "Periodic log scale", "Periodic log period"].map(String::from))
            }
            Kernel::Poly { .. } => out.extend(["Poly log c", "Poly log scale"].map(String::from)),
            Kernel::RQ { ls, .. } => {
                ls_names("RQ", ls, out);
                out.extend(["RQ log scale", "RQ log alpha"].map(String::from));
            }
            Kernel::Fixed { inner, free } => {
                out.extend(inner.param_names().into_iter().zip(free).filter(|(_, f)| **f).map(|(n, _)| n))
            }
            Kernel::Masked { inner, .. } => inner.push_names(out),
            Kernel::Sum(ks) | Kernel::Product(ks) => ks.iter().for_each(|k| k.push_names(out)),
        }
    }

    // ---------------------------------------------------------------------
    // Shape checks

    /// Checks that the kernel accepts inputs of dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        let ard = |ls: &LengthScale, name: &str| -> Result<()> {
            match ls {
                LengthScale::Ard(v) if v.len() != d => Err(GpError::config(format!(
                    "{name} has {} length scales but inputs have dimension {d}",
                    v.len()
                ))),
                _ => Ok(()),
            }
        };
        match self {
            Kernel::Lin { ls } | Kernel::Matern { ls, .. } | Kernel::SE { ls, .. } | Kernel::RQ { ls, .. } => {
                ard(ls, &self.type_name())
            }
            Kernel::Fixed { inner, .. } => inner.validate(d),
            Kernel::Masked { inner, dims } => {
                if let Some(bad) = dims.iter().find(|&&i| i >= d) {
                    return Err(GpError::config(format!(
                        "masked dimension {} out of range for inputs of dimension {d}",
                        bad + 1
                    )));
                }
                inner.validate(dims.len())
            }
            Kernel::Sum(ks) | Kernel::Product(ks) => ks.iter().try_for_each(|k| k.validate(d)),
            _ => Ok(()),
        }
    }

    // ---------------------------------------------------------------------
    // Evaluation

    /// `k(x, x')`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(GpError::input(format!("input dimensions differ: {} vs {}", x.len(), y.len())));
        }
        self.validate(x.len())?;
        Ok(self.value(x, y))
    }

    /// Unchecked `k(x, x')`; shapes must already be validated.
    #[inline]
    pub(crate) fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.k(Pt { data: x, dims: None }, Pt { data: y, dims: None })
    }

    fn k(&self, x: Pt, y: Pt) -> f64 {
        match self {
            Kernel::Const { log_sigma } => (2.0 * log_sigma).exp(),
            Kernel::Lin { ls } => match ls {
                LengthScale::Iso(l) => dot(x, y) * (-2.0 * l).exp(),
                LengthScale::Ard(v) => (0..x.dim()).map(|i| x.at(i) * y.at(i) * (-2.0 * v[i]).exp()).sum(),
            },
            Kernel::Matern { order, ls, log_sigma } => {
                let r2 = scaled_sq_dist(ls, x, y);
                (2.0 * log_sigma).exp() * profile(Stationary::Matern(*order), r2).0
            }
            Kernel::SE { ls, log_sigma } => {
                let r2 = scaled_sq_dist(ls, x, y);
                (2.0 * log_sigma).exp() * (-0.5 * r2).exp()
            }
            Kernel::RQ { ls, log_sigma, log_alpha } => {
                let r2 = scaled_sq_dist(ls, x, y);
                (2.0 * log_sigma).exp() * profile(Stationary::RQ(log_alpha.exp()), r2).0
            }
            Kernel::Periodic { log_ell, log_sigma, log_p } => {
                let r = sq_dist(x, y).sqrt();
                let s = (std::f64::consts::PI * r / log_p.exp()).sin();
                (2.0 * log_sigma).exp() * (-2.0 * s * s * (-2.0 * log_ell).exp()).exp()
            }
            Kernel::Poly { log_c, log_sigma, degree } => {
                (2.0 * log_sigma).exp() * (dot(x, y) + log_c.exp()).powi(*degree as i32)
            }
            Kernel::Noise { log_sigma } => {
                if (0..x.dim()).all(|i| x.at(i) == y.at(i)) {
                    (2.0 * log_sigma).exp()
                } else {
                    0.0
                }
            }
            Kernel::Fixed { inner, .. } => inner.k(x, y),
            Kernel::Masked { inner, dims } => with_mask(x, y, dims, |xm, ym| inner.k(xm, ym)),
            Kernel::Sum(ks) => ks.iter().map(|k| k.k(x, y)).sum(),
            Kernel::Product(ks) => ks.iter().map(|k| k.k(x, y)).product(),
        }
    }

    /// `∂k(x, x') / ∂θ` over the flattened log-parameters.
    pub fn grad_params(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if x.len() != y.len() {
            return Err(GpError::input(format!("input dimensions differ: {} vs {}", x.len(), y.len())));
        }
        self.validate(x.len())?;
        let mut out = vec![0.0; self.num_params()];
        self.grad_into(x, y, &mut out);
        Ok(out)
    }

    /// Unchecked gradient into `out` (length `num_params`); returns `k(x, x')`.
    #[inline]
    pub(crate) fn grad_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) -> f64 {
        self.kg(Pt { data: x, dims: None }, Pt { data: y, dims: None }, out)
    }

    fn kg(&self, x: Pt, y: Pt, out: &mut [f64]) -> f64 {
        match self {
            Kernel::Const { log_sigma } => {
                let k = (2.0 * log_sigma).exp();
                out[0] = 2.0 * k;
                k
            }
            Kernel::Noise { .. } => {
                let k = self.k(x, y);
                out[0] = 2.0 * k;
                k
            }
            Kernel::Lin { ls } => match ls {
                LengthScale::Iso(l) => {
                    let k = dot(x, y) * (-2.0 * l).exp();
                    out[0] = -2.0 * k;
                    k
                }
                LengthScale::Ard(v) => {
                    let mut k = 0.0;
                    for i in 0..x.dim() {
                        let t = x.at(i) * y.at(i) * (-2.0 * v[i]).exp();
                        out[i] = -2.0 * t;
                        k += t;
                    }
                    k
                }
            },
            Kernel::Matern { order, ls, log_sigma } => stationary_grad(Stationary::Matern(*order), ls, *log_sigma, x, y, out),
            Kernel::SE { ls, log_sigma } => stationary_grad(Stationary::SE, ls, *log_sigma, x, y, out),
            Kernel::RQ { ls, log_sigma, log_alpha } => {
                let alpha = log_alpha.exp();
                let nl = ls.len();
                let k = stationary_grad(Stationary::RQ(alpha), ls, *log_sigma, x, y, &mut out[..nl + 1]);
                let r2 = scaled_sq_dist(ls, x, y);
                let u = 1.0 + r2 / (2.0 * alpha);
                out[nl + 1] = k * (-alpha * u.ln() + r2 / (2.0 * u));
                k
            }
            Kernel::Periodic { log_ell, log_sigma, log_p } => {
                let r = sq_dist(x, y).sqrt();
                let p = log_p.exp();
                let arg = std::f64::consts::PI * r / p;
                let (s, c) = arg.sin_cos();
                let inv_l2 = (-2.0 * log_ell).exp();
                let k = (2.0 * log_sigma).exp() * (-2.0 * s * s * inv_l2).exp();
                out[0] = k * 4.0 * s * s * inv_l2;
                out[1] = 2.0 * k;
                out[2] = k * 4.0 * s * c * arg * inv_l2;
                k
            }
            Kernel::Poly { log_c, log_sigma, degree } => {
                let s2 = (2.0 * log_sigma).exp();
                let c = log_c.exp();
                let base = dot(x, y) + c;
                let d = *degree as i32;
                let k = s2 * base.powi(d);
                out[0] = if d == 0 { 0.0 } else { s2 * f64::from(d) * base.powi(d - 1) * c };
                out[1] = 2.0 * k;
                k
            }
            Kernel::Fixed { inner, free } => {
                let mut all = vec![0.0; free.len()];
                let k = inner.kg(x, y, &mut all);
                let mut j = 0;
                for (g, f) in all.iter().zip(free) {
                    if *f {
                        out[j] = *g;
                        j += 1;
                    }
                }
                k
            }
            Kernel::Masked { inner, dims } => with_mask(x, y, dims, |xm, ym| inner.kg(xm, ym, out)),
            Kernel::Sum(ks) => {
                let mut k = 0.0;
                let mut off = 0;
                for child in ks {
                    let n = child.num_params();
                    k += child.kg(x, y, &mut out[off..off + n]);
                    off += n;
                }
                k
            }
            Kernel::Product(ks) => {
                let mut values = Vec::with_capacity(ks.len());
                let mut offsets = Vec::with_capacity(ks.len() + 1);
                let mut off = 0;
                for child in ks {
                    let n = child.num_params();
                    offsets.push(off);
                    values.push(child.kg(x, y, &mut out[off..off + n]));
                    off += n;
                }
                offsets.push(off);
                // Product of all other factors, without dividing.
                let m = ks.len();
                let mut prefix = vec![1.0; m + 1];
                for i in 0..m {
                    prefix[i + 1] = prefix[i] * values[i];
                }
                let mut suffix = 1.0;
                for i in (0..m).rev() {
                    let others = prefix[i] * suffix;
                    for g in &mut out[offsets[i]..offsets[i + 1]] {
                        *g *= others;
                    }
                    suffix *= values[i];
                }
                prefix[m]
            }
        }
    }

    // ---------------------------------------------------------------------
    // Matrices

    /// Covariance matrix of the columns of `x` (`d × n`).
    pub fn gram(&self, x: &DMatrix<f64>) -> Result<GramMatrix> {
        self.validate(x.nrows())?;
        Ok(GramMatrix { values: self.gram_unchecked(x), jitter_applied: 0.0 })
    }

    pub(crate) fn gram_unchecked(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.ncols();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            let xj = col(x, j);
            for i in j..n {
                let v = self.value(col(x, i), xj);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Rectangular covariance `K(X, X*)`, `n × m`.
    pub fn cross_gram(&self, x: &DMatrix<f64>, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != xs.nrows() {
            return Err(GpError::input(format!(
                "input dimensions differ: {} vs {}",
                x.nrows(),
                xs.nrows()
            )));
        }
        self.validate(x.nrows())?;
        Ok(self.cross_unchecked(x, xs))
    }

    pub(crate) fn cross_unchecked(&self, x: &DMatrix<f64>, xs: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.ncols(), xs.ncols(), |i, j| self.value(col(x, i), col(xs, j)))
    }

    /// `k(x_i, x_i)` for every column.
    pub(crate) fn diag_unchecked(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(x.ncols(), |i, _| {
            let c = col(x, i);
            self.value(c, c)
        })
    }

    /// One `n × n` matrix `∂K/∂θ_j` per parameter.
    pub fn gram_grads(&self, x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        self.validate(x.nrows())?;
        Ok(self.gram_grads_unchecked(x))
    }

    pub(crate) fn gram_grads_unchecked(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let n = x.ncols();
        let p = self.num_params();
        let mut mats = vec![DMatrix::zeros(n, n); p];
        let mut buf = vec![0.0; p];
        for j in 0..n {
            for i in j..n {
                self.grad_into(col(x, i), col(x, j), &mut buf);
                for (m, g) in mats.iter_mut().zip(&buf) {
                    m[(i, j)] = *g;
                    m[(j, i)] = *g;
                }
            }
        }
        mats
    }

    /// `Σ_ij W_ij ∂k(x_i, x_j)/∂θ` for symmetric `W`, without forming the
    /// derivative matrices.
    pub(crate) fn grad_contract_sym(&self, x: &DMatrix<f64>, w: &DMatrix<f64>) -> Vec<f64> {
        let n = x.ncols();
        let p = self.num_params();
        let mut acc = vec![0.0; p];
        let mut buf = vec![0.0; p];
        for j in 0..n {
            for i in j..n {
                let weight = if i == j { w[(i, j)] } else { w[(i, j)] + w[(j, i)] };
                if weight == 0.0 {
                    continue;
                }
                self.grad_into(col(x, i), col(x, j), &mut buf);
                for (a, g) in acc.iter_mut().zip(&buf) {
                    *a += weight * g;
                }
            }
        }
        acc
    }

    /// `Σ_ij W_ij ∂k(a_i, b_j)/∂θ` for rectangular `W` (`n_a × n_b`).
    pub(crate) fn grad_contract_cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>, w: &DMatrix<f64>) -> Vec<f64> {
        let p = self.num_params();
        let mut acc = vec![0.0; p];
        let mut buf = vec![0.0; p];
        for j in 0..b.ncols() {
            for i in 0..a.ncols() {
                let weight = w[(i, j)];
                if weight == 0.0 {
                    continue;
                }
                self.grad_into(col(a, i), col(b, j), &mut buf);
                for (acc, g) in acc.iter_mut().zip(&buf) {
                    *acc += weight * g;
                }
            }
        }
        acc
    }
}

fn stationary_grad(kind: Stationary, ls: &LengthScale, log_sigma: f64, x: Pt, y: Pt, out: &mut [f64]) -> f64 {
    let s2 = (2.0 * log_sigma).exp();
    let r2 = scaled_sq_dist(ls, x, y);
    let (g, dg) = profile(kind, r2);
    let k = s2 * g;
    let nl = match ls {
        LengthScale::Iso(_) => {
            out[0] = s2 * dg * r2;
            1
        }
        LengthScale::Ard(v) => {
            for i in 0..v.len() {
                let d = (x.at(i) - y.at(i)) * (-v[i]).exp();
                out[i] = s2 * dg * d * d;
            }
            v.len()
        }
    };
    out[nl] = 2.0 * k;
    k
}

/// Runs `f` on `x`, `y` restricted to `dims`, composing with any outer mask.
#[inline]
fn with_mask<R>(x: Pt, y: Pt, dims: &[usize], f: impl FnOnce(Pt, Pt) -> R) -> R {
    match x.dims {
        None => f(Pt { data: x.data, dims: Some(dims) }, Pt { data: y.data, dims: Some(dims) }),
        Some(outer) => {
            let composed: Vec<usize> = dims.iter().map(|&i| outer[i]).collect();
            f(Pt { data: x.data, dims: Some(&composed) }, Pt { data: y.data, dims: Some(&composed) })
        }
    }
}

/// Column `i` of a column-major `d × n` matrix as a slice.
#[inline]
pub(crate) fn col(x: &DMatrix<f64>, i: usize) -> &[f64] {
    let d = x.nrows();
    &x.as_slice()[i * d..(i + 1) * d]
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Sum(ks) | Kernel::Product(ks) => {
                writeln!(f, " Type: {}", self.type_name())?;
                for k in ks {
                    write!(f, "{k}")?;
                }
                Ok(())
            }
            Kernel::Fixed { inner, .. } | Kernel::Masked { inner, .. } => {
                writeln!(f, " Type: {}, Params: {:?}", self.type_name(), self.params())?;
                write!(f, "{inner}")
            }
            _ => writeln!(f, " Type: {}, Params: {:?}", self.type_name(), self.params()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zoo(d: usize, rng: &mut ChaCha8Rng) -> Vec<Kernel> {
        let mut p = || rng.random_range(-1.0..1.0);
        let ard = |rng: &mut dyn FnMut() -> f64| (0..d).map(|_| rng()).collect::<Vec<_>>();
        let mut leaves = vec![
            Kernel::constant(p()),
            Kernel::lin_iso(p()),
            Kernel::matern_iso(MaternOrder::Half, p(), p()),
            Kernel::matern_iso(MaternOrder::ThreeHalves, p(), p()),
            Kernel::matern_iso(MaternOrder::FiveHalves, p(), p()),
            Kernel::se_iso(p(), p()),
            Kernel::periodic(p(), p(), p()),
            Kernel::poly(p(), p(), 3),
            Kernel::noise(p()),
            Kernel::rq_iso(p(), p(), p()),
        ];
        leaves.push(Kernel::lin_ard(ard(&mut p)));
        leaves.push(Kernel::matern_ard(MaternOrder::Half, ard(&mut p), p()));
        leaves.push(Kernel::matern_ard(MaternOrder::ThreeHalves, ard(&mut p), p()));
        leaves.push(Kernel::matern_ard(MaternOrder::FiveHalves, ard(&mut p), p()));
        leaves.push(Kernel::se_ard(ard(&mut p), p()));
        leaves.push(Kernel::rq_ard(ard(&mut p), p(), p()));
        leaves
    }

    fn random_points(d: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(d, n, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn closed_form_values() {
        let se = Kernel::se_iso(0.0, 0.0);
        assert_eq!(se.eval(&[0.3], &[0.3]).unwrap(), 1.0);
        assert!((se.eval(&[0.0], &[1.0]).unwrap() - 0.606_530_659_712_633_4).abs() < 1e-15);
        let per = Kernel::periodic(0.0, 0.0, 0.0);
        assert!((per.eval(&[0.0], &[1.0]).unwrap() - 1.0).abs() < 1e-15);
        let m12 = Kernel::matern_iso(MaternOrder::Half, 0.0, 0.0);
        assert!((m12.eval(&[0.0], &[1.0]).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn se_gradient_at_coincident_points() {
        let k = Kernel::se_iso(0.4, 0.3);
        let g = k.grad_params(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 2.0 * (0.6f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn matern_gradients_finite_at_zero_distance() {
        for order in [MaternOrder::Half, MaternOrder::ThreeHalves, MaternOrder::FiveHalves] {
            let k = Kernel::matern_ard(order, vec![0.1, -0.2], 0.0);
            let g = k.grad_params(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
            assert!(g.iter().all(|v| v.is_finite()));
            assert_eq!(&g[..2], &[0.0, 0.0]);
        }
    }

    #[test]
    fn noise_uses_exact_equality() {
        let k = Kernel::noise(0.5);
        assert_eq!(k.eval(&[1.0], &[1.0]).unwrap(), 1f64.exp());
        assert_eq!(k.eval(&[1.0], &[1.0 + 1e-15]).unwrap(), 0.0);
    }

    #[test]
    fn dimension_errors() {
        let k = Kernel::se_ard(vec![0.0, 0.0], 0.0);
        assert!(matches!(k.eval(&[1.0], &[1.0, 2.0]), Err(GpError::Input(_))));
        assert!(matches!(k.eval(&[1.0], &[1.0]), Err(GpError::Config(_))));
        let m = Kernel::masked(Kernel::se_iso(0.0, 0.0), vec![3]).unwrap();
        assert!(matches!(m.eval(&[1.0, 2.0], &[1.0, 2.0]), Err(GpError::Config(_))));
    }

    #[test]
    fn param_flattening_order() {
        let k = Kernel::se_iso(0.3, -0.2);
        assert_eq!(k.params(), vec![0.3, -0.2]);
        let s = Kernel::Sum(vec![Kernel::se_iso(1.0, 2.0), Kernel::lin_iso(3.0)]);
        assert_eq!(s.params(), vec![1.0, 2.0, 3.0]);
        let mut s2 = s.clone();
        assert!(s2.set_params(&[1.0]).is_err());
        s2.set_params(&s.params()).unwrap();
        assert_eq!(s2, s);
    }

    #[test]
    fn fixed_exposes_only_free_params() {
        let mut k = Kernel::fixed(Kernel::se_iso(0.1, 0.2), vec![true, false]).unwrap();
        assert_eq!(k.params(), vec![0.1]);
        k.set_params(&[0.7]).unwrap();
        match &k {
            Kernel::Fixed { inner, .. } => assert_eq!(inner.params(), vec![0.7, 0.2]),
            _ => unreachable!(),
        }
        let g = k.grad_params(&[0.0], &[1.0]).unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn gram_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_points(2, 6, &mut rng);
        let xs = random_points(2, 3, &mut rng);
        for k in zoo(2, &mut rng) {
            let g = k.gram(&x).unwrap();
            let c = k.cross_gram(&x, &xs).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    assert_eq!(g.values[(i, j)], k.eval(col(&x, i), col(&x, j)).unwrap());
                }
                for j in 0..3 {
                    assert_eq!(c[(i, j)], k.eval(col(&x, i), col(&xs, j)).unwrap());
                }
            }
            assert_eq!(k.cross_gram(&x, &x).unwrap(), g.values);
        }
    }

    #[test]
    fn duplicated_point_gram() {
        let x = DMatrix::from_row_slice(1, 2, &[0.5, 0.5]);
        let g = Kernel::se_iso(0.0, 0.0).gram(&x).unwrap();
        assert_eq!(g.values, DMatrix::from_element(2, 2, 1.0));
        let one = DMatrix::from_row_slice(1, 1, &[0.5]);
        assert_eq!(Kernel::periodic(0.1, 0.2, 0.3).gram(&one).unwrap().values.shape(), (1, 1));
    }

    #[test]
    fn ard_agrees_with_iso() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_points(3, 8, &mut rng);
        let pairs: Vec<(Kernel, Kernel)> = vec![
            (Kernel::se_iso(0.3, 0.1), Kernel::se_ard(vec![0.3; 3], 0.1)),
            (Kernel::rq_iso(0.3, 0.1, -0.4), Kernel::rq_ard(vec![0.3; 3], 0.1, -0.4)),
            (Kernel::lin_iso(0.3), Kernel::lin_ard(vec![0.3; 3])),
            (
                Kernel::matern_iso(MaternOrder::FiveHalves, 0.3, 0.1),
                Kernel::matern_ard(MaternOrder::FiveHalves, vec![0.3; 3], 0.1),
            ),
        ];
        for (iso, ard) in pairs {
            let a = iso.gram(&x).unwrap().values;
            let b = ard.gram(&x).unwrap().values;
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn masked_all_dims_is_identity_and_sum_product_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_points(2, 7, &mut rng);
        let a = Kernel::se_ard(vec![0.2, -0.1], 0.3);
        let b = Kernel::periodic(0.1, 0.0, 0.5);
        let m = Kernel::masked(a.clone(), vec![0, 1]).unwrap();
        assert_eq!(m.gram(&x).unwrap().values, a.gram(&x).unwrap().values);
        let ga = a.gram(&x).unwrap().values;
        let gb = b.gram(&x).unwrap().values;
        let sum = Kernel::Sum(vec![a.clone(), b.clone()]).gram(&x).unwrap().values;
        let prod = Kernel::Product(vec![a, b]).gram(&x).unwrap().values;
        assert!((sum - (&ga + &gb)).amax() <= 1e-15);
        assert!((prod - ga.component_mul(&gb)).amax() <= 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let mut kernels = zoo(2, &mut rng);
            kernels.push(Kernel::Sum(vec![Kernel::se_iso(0.1, 0.2), Kernel::rq_iso(-0.3, 0.1, 0.4)]));
            kernels.push(Kernel::Product(vec![
                Kernel::periodic(0.2, 0.1, 0.3),
                Kernel::lin_iso(-0.2),
                Kernel::matern_iso(MaternOrder::ThreeHalves, 0.1, 0.0),
            ]));
            kernels.push(Kernel::fixed(Kernel::se_iso(0.1, 0.2), vec![false, true]).unwrap());
            kernels.push(Kernel::masked(Kernel::rq_iso(0.1, 0.2, 0.3), vec![1]).unwrap());
            for k in kernels {
                let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let y = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let g = k.grad_params(&x, &y).unwrap();
                let p0 = k.params();
                for j in 0..p0.len() {
                    let h = 1e-5;
                    let mut kp = k.clone();
                    let mut p = p0.clone();
                    p[j] += h;
                    kp.set_params(&p).unwrap();
                    let fp = kp.eval(&x, &y).unwrap();
                    p[j] -= 2.0 * h;
                    kp.set_params(&p).unwrap();
                    let fm = kp.eval(&x, &y).unwrap();
                    let fd = (fp - fm) / (2.0 * h);
                    let err = (fd - g[j]).abs() / g[j].abs().max(1e-3);
                    assert!(err < 1e-6, "{} param {j}: fd {fd} vs {}", k.type_name(), g[j]);
                }
            }
        }
    }

    #[test]
    fn grad_contractions_agree_with_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_points(2, 5, &mut rng);
        let u = random_points(2, 3, &mut rng);
        let k = Kernel::Sum(vec![Kernel::se_ard(vec![0.1, 0.2], 0.3), Kernel::periodic(0.0, 0.1, 0.2)]);
        let w = DMatrix::from_fn(5, 5, |i, j| ((i * 5 + j) as f64).sin());
        let mats = k.gram_grads(&x).unwrap();
        let contracted = k.grad_contract_sym(&x, &w);
        for (m, c) in mats.iter().zip(&contracted) {
            assert!((m.component_mul(&w).sum() - c).abs() < 1e-12);
        }
        let wc = DMatrix::from_fn(5, 3, |i, j| ((i + 7 * j) as f64).cos());
        let cross = k.grad_contract_cross(&x, &u, &wc);
        for (p, c) in cross.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..5 {
                for j in 0..3 {
                    s += wc[(i, j)] * k.grad_params(col(&x, i), col(&u, j)).unwrap()[p];
                }
            }
            assert!((s - c).abs() < 1e-12);
        }
    }
}
