//! Mean functions `m_θ(x)`. Parameters live on their natural scale.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};
use crate::kernels::col;

#[derive(Debug, Clone, PartialEq)]
pub enum MeanFunction {
    Zero,
    /// Scalar constant.
    Const(f64),
    /// `xᵀθ`.
    Lin(Vec<f64>),
    /// `Σ_j θ_jᵀ x^j` for `j = 1..=D`, powers taken elementwise; `coeffs`
    /// is `d × D` with column `j − 1` holding `θ_j`.
    Poly(DMatrix<f64>),
    Sum(Vec<MeanFunction>),
    Product(Vec<MeanFunction>),
}

impl MeanFunction {
    pub fn type_name(&self) -> &'static str {
        match self {
            MeanFunction::Zero => "MeanZero",
            MeanFunction::Const(_) => "MeanConst",
            MeanFunction::Lin(_) => "MeanLin",
            MeanFunction::Poly(_) => "MeanPoly",
            MeanFunction::Sum(_) => "SumMean",
            MeanFunction::Product(_) => "ProdMean",
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            MeanFunction::Zero => 0,
            MeanFunction::Const(_) => 1,
            MeanFunction::Lin(t) => t.len(),
            MeanFunction::Poly(c) => c.len(),
            MeanFunction::Sum(ms) | MeanFunction::Product(ms) => ms.iter().map(Self::num_params).sum(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            MeanFunction::Zero => vec![],
            MeanFunction::Const(c) => vec![*c],
            MeanFunction::Lin(t) => t.clone(),
            MeanFunction::Poly(c) => c.as_slice().to_vec(),
            MeanFunction::Sum(ms) | MeanFunction::Product(ms) => ms.iter().flat_map(Self::params).collect(),
        }
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(GpError::config(format!(
                "mean function expects {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        self.read(params);
        Ok(())
    }

    fn read(&mut self, src: &[f64]) -> usize {
        match self {
            MeanFunction::Zero => 0,
            MeanFunction::Const(c) => {
                *c = src[0];
                1
            }
            MeanFunction::Lin(t) => {
                let n = t.len();
                t.copy_from_slice(&src[..n]);
                n
            }
            MeanFunction::Poly(c) => {
                let n = c.len();
                c.as_mut_slice().copy_from_slice(&src[..n]);
                n
            }
            MeanFunction::Sum(ms) | MeanFunction::Product(ms) => {
                let mut used = 0;
                for m in ms.iter_mut() {
                    used += m.read(&src[used..]);
                }
                used
            }
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            MeanFunction::Zero => vec![],
            MeanFunction::Const(_) => vec!["Mean const".into()],
            MeanFunction::Lin(t) => (1..=t.len()).map(|i| format!("Mean lin {i}")).collect(),
            MeanFunction::Poly(c) => {
                let mut out = Vec::with_capacity(c.len());
                for j in 1..=c.ncols() {
                    for i in 1..=c.nrows() {
                        out.push(format!("Mean poly {i},{j}"));
                    }
                }
                out
            }
            MeanFunction::Sum(ms) | MeanFunction::Product(ms) => ms.iter().flat_map(Self::param_names).collect(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            MeanFunction::Lin(t) if t.len() != d => Err(GpError::input(format!(
                "linear mean has {} coefficients but inputs have dimension {d}",
                t.len()
            ))),
            MeanFunction::Poly(c) if c.nrows() != d => Err(GpError::input(format!(
                "polynomial mean has {} rows but inputs have dimension {d}",
                c.nrows()
            ))),
            MeanFunction::Sum(ms) | MeanFunction::Product(ms) => ms.iter().try_for_each(|m| m.validate(d)),
            _ => Ok(()),
        }
    }

    /// `m(x_i)` for every column of `x`.
    pub fn eval(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.validate(x.nrows())?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(x.ncols(), |i, _| self.at(col(x, i)))
    }

    fn at(&self, x: &[f64]) -> f64 {
        match self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Const(c) => *c,
            MeanFunction::Lin(t) => x.iter().zip(t).map(|(a, b)| a * b).sum(),
            MeanFunction::Poly(c) => {
                let mut s = 0.0;
                for (i, xi) in x.iter().enumerate() {
                    let mut pow = 1.0;
                    for j in 0..c.ncols() {
                        pow *= xi;
                        s += c[(i, j)] * pow;
                    }
                }
                s
            }
            MeanFunction::Sum(ms) => ms.iter().map(|m| m.at(x)).sum(),
            MeanFunction::Product(ms) => ms.iter().map(|m| m.at(x)).product(),
        }
    }

    /// `∂m(x_i)/∂θ_j` as a `num_params × n` matrix.
    pub fn grad_params(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.validate(x.nrows())?;
        Ok(self.grad_unchecked(x))
    }

    pub(crate) fn grad_unchecked(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.num_params(), x.ncols());
        let mut buf = vec![0.0; self.num_params()];
        for i in 0..x.ncols() {
            self.grad_at(col(x, i), &mut buf);
            out.column_mut(i).copy_from_slice(&buf);
        }
        out
    }

    fn grad_at(&self, x: &[f64], out: &mut [f64]) -> f64 {
        match self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Const(c) => {
                out[0] = 1.0;
                *c
            }
            MeanFunction::Lin(_) => {
                out.copy_from_slice(x);
                self.at(x)
            }
            MeanFunction::Poly(c) => {
                let d = c.nrows();
                for (i, xi) in x.iter().enumerate() {
                    let mut pow = 1.0;
                    for j in 0..c.ncols() {
                        pow *= xi;
                        out[j * d + i] = pow;
                    }
                }
                self.at(x)
            }
            MeanFunction::Sum(ms) => {
                let mut off = 0;
                let mut v = 0.0;
                for m in ms {
                    let n = m.num_params();
                    v += m.grad_at(x, &mut out[off..off + n]);
                    off += n;
                }
                v
            }
            MeanFunction::Product(ms) => {
                let mut values = Vec::with_capacity(ms.len());
                let mut ranges = Vec::with_capacity(ms.len());
                let mut off = 0;
                for m in ms {
                    let n = m.num_params();
                    values.push(m.grad_at(x, &mut out[off..off + n]));
                    ranges.push(off..off + n);
                    off += n;
                }
                for (i, r) in ranges.into_iter().enumerate() {
                    let others: f64 = values.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).product();
                    out[r].iter_mut().for_each(|g| *g *= others);
                }
                values.iter().product()
            }
        }
    }
}

impl fmt::Display for MeanFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Type: {}, Params: {:?}", self.type_name(), self.params())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points() -> DMatrix<f64> {
        DMatrix::from_fn(2, 5, |i, j| ((i * 5 + j) as f64 * 0.7).sin() * 2.0)
    }

    #[test]
    fn zero_and_const() {
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        assert_eq!(MeanFunction::Zero.eval(&x).unwrap(), DVector::zeros(3));
        assert_eq!(MeanFunction::Const(2.5).eval(&x).unwrap(), DVector::from_element(3, 2.5));
        assert_eq!(MeanFunction::Const(2.5).grad_params(&x).unwrap(), DMatrix::from_element(1, 3, 1.0));
        assert_eq!(MeanFunction::Zero.num_params(), 0);
    }

    #[test]
    fn degree_one_poly_equals_lin() {
        let x = points();
        let lin = MeanFunction::Lin(vec![0.3, -1.2]);
        let poly = MeanFunction::Poly(DMatrix::from_column_slice(2, 1, &[0.3, -1.2]));
        assert!((lin.eval(&x).unwrap() - poly.eval(&x).unwrap()).amax() < 1e-14);
        assert_eq!(lin.grad_params(&x).unwrap(), x);
    }

    #[test]
    fn sum_with_zero_is_identity_and_compositions() {
        let x = points();
        let a = MeanFunction::Lin(vec![0.5, 0.25]);
        let b = MeanFunction::Const(-1.5);
        let sum = MeanFunction::Sum(vec![MeanFunction::Zero, a.clone()]);
        assert_eq!(sum.eval(&x).unwrap(), a.eval(&x).unwrap());
        let prod = MeanFunction::Product(vec![a.clone(), b.clone()]);
        let expected = a.eval(&x).unwrap().component_mul(&b.eval(&x).unwrap());
        assert!((prod.eval(&x).unwrap() - expected).amax() <= 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_input_error() {
        let x = points();
        assert!(matches!(MeanFunction::Lin(vec![1.0]).eval(&x), Err(GpError::Input(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = points();
        let means = [
            MeanFunction::Poly(DMatrix::from_column_slice(2, 3, &[0.3, -0.2, 0.5, 0.1, -0.05, 0.02])),
            MeanFunction::Product(vec![MeanFunction::Lin(vec![0.4, -0.3]), MeanFunction::Const(1.7)]),
            MeanFunction::Sum(vec![MeanFunction::Const(0.2), MeanFunction::Lin(vec![0.1, 0.9])]),
        ];
        for m in means {
            let g = m.grad_params(&x).unwrap();
            let p0 = m.params();
            for j in 0..p0.len() {
                let h = 1e-6;
                let mut mp = m.clone();
                let mut p = p0.clone();
                p[j] += h;
                mp.set_params(&p).unwrap();
                let fp = mp.eval(&x).unwrap();
                p[j] -= 2.0 * h;
                mp.set_params(&p).unwrap();
                let fm = mp.eval(&x).unwrap();
                for i in 0..x.ncols() {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    let err = (fd - g[(j, i)]).abs() / g[(j, i)].abs().max(1e-3);
                    assert!(err < 1e-6, "{} param {j} point {i}", m.type_name());
                }
            }
        }
    }
}
