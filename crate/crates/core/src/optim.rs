//! Type-II maximum likelihood and MAP estimation with L-BFGS.

use std::collections::VecDeque;

use crate::error::{GpError, Result};
use crate::model::{Objective, ParamGroup};

const MEMORY: usize = 10;
const C1: f64 = 1e-4;
const C2: f64 = 0.9;

/// Which parameter groups move, plus solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    pub noise: bool,
    pub domean: bool,
    pub kern: bool,
    pub lik: bool,
    pub max_iterations: usize,
    /// Stop once the largest (projected) gradient component falls below this.
    pub g_tol: f64,
    /// Optional `(lower, upper)` per parameter of the full vector.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            noise: true,
            domean: true,
            kern: true,
            lik: true,
            max_iterations: 200,
            g_tol: 1e-8,
            bounds: None,
        }
    }
}

impl OptimizeOptions {
    fn frees(&self, g: ParamGroup) -> bool {
        match g {
            ParamGroup::Noise => self.noise,
            ParamGroup::Mean => self.domean,
            ParamGroup::Kernel => self.kern,
            ParamGroup::Lik => self.lik,
            ParamGroup::Latent => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub minimizer: Vec<f64>,
    pub minimum: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Infinity norm of the (projected) gradient at the minimizer.
    pub gradient_norm: f64,
}

/// Maximizes the log marginal likelihood. The model is left at the
/// returned minimizer of its negation; frozen groups keep their values.
pub fn optimize<M: Objective>(gp: &mut M, opts: &OptimizeOptions) -> Result<OptimResult> {
    run(gp, opts, false)
}

/// Maximizes log marginal likelihood plus log prior, honouring bounds.
pub fn map_optimize<M: Objective>(gp: &mut M, opts: &OptimizeOptions) -> Result<OptimResult> {
    run(gp, opts, true)
}

fn run<M: Objective>(gp: &mut M, opts: &OptimizeOptions, with_prior: bool) -> Result<OptimResult> {
    let full = gp.params();
    let free: Vec<usize> = gp
        .param_groups()
        .iter()
        .enumerate()
        .filter(|(_, g)| opts.frees(**g))
        .map(|(i, _)| i)
        .collect();
    if free.is_empty() {
        return Err(GpError::config("no parameter group is free to optimize"));
    }
    let bounds = match &opts.bounds {
        Some(b) if b.len() != full.len() => {
            return Err(GpError::config(format!("{} bounds given for {} parameters", b.len(), full.len())))
        }
        Some(b) => {
            if b.iter().any(|(lo, hi)| !(lo <= hi)) {
                return Err(GpError::config("every bound needs lower <= upper"));
            }
            Some(free.iter().map(|&i| b[i]).collect::<Vec<_>>())
        }
        None => None,
    };

    let expand = |sub: &[f64]| {
        let mut p = full.clone();
        for (k, &i) in free.iter().enumerate() {
            p[i] = sub[k];
        }
        p
    };
    let mut eval = |sub: &[f64]| -> Option<(f64, Vec<f64>)> {
        let p = expand(sub);
        gp.set_params(&p).ok()?;
        let mut value = gp.log_marginal();
        let mut grad = gp.grad_log_marginal();
        if with_prior {
            value += gp.priors().log_density(&p);
            gp.priors().add_gradient(&p, &mut grad);
        }
        let g: Vec<f64> = free.iter().map(|&i| -grad[i]).collect();
        (value.is_finite() && g.iter().all(|v| v.is_finite())).then_some((-value, g))
    };

    let x0: Vec<f64> = free.iter().map(|&i| full[i]).collect();
    let settings = Settings { max_iterations: opts.max_iterations, g_tol: opts.g_tol };
    let result = match bounds {
        Some(b) => minimize_bounded(&mut eval, x0, &b, &settings)?,
        None => minimize(&mut eval, x0, &settings)?,
    };
    let best = expand(&result.minimizer);
    gp.set_params(&best)?;
    Ok(OptimResult { minimizer: best, ..result })
}

/// Solver settings for [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub max_iterations: usize,
    pub g_tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { max_iterations: 200, g_tol: 1e-8 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Curvature pairs and the two-loop recursion.
struct Memory {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Memory {
    fn new() -> Self {
        Memory { pairs: VecDeque::with_capacity(MEMORY) }
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy <= 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            return;
        }
        if self.pairs.len() == MEMORY {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// `−H g`.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

/// Minimizes `f` with L-BFGS and a strong-Wolfe line search. `f` returns
/// `None` where the objective is undefined; the line search backs off from
/// such points.
pub fn minimize<F>(f: &mut F, x0: Vec<f64>, settings: &Settings) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let (mut fx, mut g) = f(&x0).ok_or_else(|| GpError::input("objective is not finite at the starting point"))?;
    let mut x = x0;
    let mut memory = Memory::new();
    let mut iterations = 0;
    let mut converged = inf_norm(&g) < settings.g_tol;

    while !converged && iterations < settings.max_iterations {
        let mut d = memory.direction(&g);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            memory = Memory::new();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let initial = if memory.pairs.is_empty() { 1.0 / inf_norm(&g).max(1.0) } else { 1.0 };
        let Some((step, fnew, gnew)) = strong_wolfe(f, &x, fx, slope, &d, initial) else {
            break;
        };
        iterations += 1;
        let xnew: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
        let s: Vec<f64> = xnew.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        let stalled = fnew >= fx && inf_norm(&gnew) >= inf_norm(&g);
        x = xnew;
        fx = fnew;
        g = gnew;
        converged = inf_norm(&g) < settings.g_tol;
        if stalled {
            break;
        }
    }
    Ok(OptimResult { gradient_norm: inf_norm(&g), minimizer: x, minimum: fx, iterations, converged })
}

/// Returns `(step, f, g)` satisfying the strong Wolfe conditions.
fn strong_wolfe<F>(f: &mut F, x: &[f64], f0: f64, slope0: f64, d: &[f64], initial: f64) -> Option<(f64, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut phi = |a: f64| -> (f64, f64, Vec<f64>) {
        let xa: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + a * di).collect();
        match f(&xa) {
            Some((v, g)) => {
                let s = dot(&g, d);
                (v, s, g)
            }
            None => (f64::INFINITY, f64::NAN, Vec::new()),
        }
    };

    let mut prev = (0.0, f0, slope0);
    let mut a = initial;
    for i in 0..40 {
        let (fa, sa, ga) = phi(a);
        if !fa.is_finite() || fa > f0 + C1 * a * slope0 || (i > 0 && fa >= prev.1) {
            return zoom(&mut phi, f0, slope0, prev, (a, fa, sa));
        }
        if sa.abs() <= -C2 * slope0 {
            return Some((a, fa, ga));
        }
        if sa >= 0.0 {
            return zoom(&mut phi, f0, slope0, (a, fa, sa), prev);
        }
        prev = (a, fa, sa);
        a *= 2.0;
    }
    None
}

fn zoom<P>(
    phi: &mut P,
    f0: f64,
    slope0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
) -> Option<(f64, f64, Vec<f64>)>
where
    P: FnMut(f64) -> (f64, f64, Vec<f64>),
{
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for _ in 0..60 {
        let width = hi.0 - lo.0;
        let frac = if hi.1.is_finite() {
            // Minimizer of the quadratic through φ(lo), φ'(lo), φ(hi), as a
            // fraction of the bracket, kept away from its ends.
            let denom = 2.0 * (hi.1 - lo.1 - lo.2 * width);
            let t = -lo.2 * width / denom;
            if t.is_finite() && (0.1..=0.9).contains(&t) {
                t
            } else {
                0.5
            }
        } else {
            0.25
        };
        let a = lo.0 + frac * width;
        let (fa, sa, ga) = phi(a);
        if fa.is_finite() && fa <= f0 + C1 * a * slope0 && best.as_ref().is_none_or(|b| fa < b.1) {
            best = Some((a, fa, ga.clone()));
        }
        if !fa.is_finite() || fa > f0 + C1 * a * slope0 || fa >= lo.1 {
            hi = (a, fa, sa);
        } else {
            if sa.abs() <= -C2 * slope0 {
                return Some((a, fa, ga));
            }
            if sa * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (a, fa, sa);
        }
        if (hi.0 - lo.0).abs() <= 1e-16 * lo.0.abs().max(1.0) {
            break;
        }
    }
    // Settle for sufficient decrease when curvature cannot be met to
    // machine precision.
    best
}

/// Projected L-BFGS with Armijo backtracking along the projected path.
pub fn minimize_bounded<F>(f: &mut F, x0: Vec<f64>, bounds: &[(f64, f64)], settings: &Settings) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let project = |x: &mut [f64]| {
        for (xi, (lo, hi)) in x.iter_mut().zip(bounds) {
            *xi = xi.clamp(*lo, *hi);
        }
    };
    let proj_grad = |x: &[f64], g: &[f64]| -> f64 {
        x.iter()
            .zip(g)
            .zip(bounds)
            .map(|((xi, gi), (lo, hi))| ((xi - gi).clamp(*lo, *hi) - xi).abs())
            .fold(0.0, f64::max)
    };

    let mut x = x0;
    project(&mut x);
    let (mut fx, mut g) = f(&x).ok_or_else(|| GpError::input("objective is not finite at the starting point"))?;
    let mut memory = Memory::new();
    let mut iterations = 0;
    let mut converged = proj_grad(&x, &g) < settings.g_tol;

    while !converged && iterations < settings.max_iterations {
        let at_bound = |i: usize, di: f64| {
            (x[i] <= bounds[i].0 && di < 0.0) || (x[i] >= bounds[i].1 && di > 0.0)
        };
        let mut d = memory.direction(&g);
        for i in 0..d.len() {
            if at_bound(i, d[i]) {
                d[i] = 0.0;
            }
        }
        if !(dot(&g, &d) < 0.0) {
            memory = Memory::new();
            d = g.iter().map(|v| -v).collect();
            for i in 0..d.len() {
                if at_bound(i, d[i]) {
                    d[i] = 0.0;
                }
            }
        }
        let mut step = if memory.pairs.is_empty() { 1.0 / inf_norm(&g).max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let mut xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut xt);
            let moved: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &moved);
            if decrease >= 0.0 {
                break;
            }
            if let Some((ft, gt)) = f(&xt) {
                if ft <= fx + C1 * decrease {
                    accepted = Some((xt, ft, gt, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xt, ft, gt, s)) = accepted else {
            break;
        };
        iterations += 1;
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        x = xt;
        fx = ft;
        g = gt;
        converged = proj_grad(&x, &g) < settings.g_tol;
    }
    Ok(OptimResult { gradient_norm: proj_grad(&x, &g), minimizer: x, minimum: fx, iterations, converged })
}
