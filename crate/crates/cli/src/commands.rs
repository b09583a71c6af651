//! The `fit`, `predict`, `mcmc`, `sparse` and `bench` commands.

use std::fs;
use std::path::{Path, PathBuf};

use gp_core::simulate::{bench_data, quantiles, sparse_demo_data, SPARSE_DEMO_QUANTILES};
use gp_core::{
    map_optimize, mcmc, nearest_inducing_blocks, optimize, DMatrix, DVector, GpExact, GpMc, Kernel, MeanFunction,
    Objective, OptimizeOptions, ParamGroup, Prior, Scheme, SparseGp, DEFAULT_QUAD_ORDER,
};

use crate::bench::time_min;
use crate::config::{Blocks, Grid, Groups, Inducing, PriorSpec, RunConfig, SchemeKind};
use crate::data::{fmt_f64, load_csv, write_predictions, write_table, Column, Dataset};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Predict,
    Mcmc,
    Sparse,
    Bench,
}

/// Runs one command and returns the files it wrote.
pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", cfg.out.display())))?;
    match cmd {
        Command::Fit => fit(cfg),
        Command::Predict => predict(cfg),
        Command::Mcmc => run_mcmc(cfg),
        Command::Sparse => sparse(cfg),
        Command::Bench => bench(cfg),
    }
}

fn training_data(cfg: &RunConfig) -> Result<(Dataset, DVector<f64>), CliError> {
    let mut ds = load_csv(cfg.require_data()?, &cfg.x_cols, Some(&cfg.y_col))?;
    let y = ds.y.take().expect("a response column was requested");
    Ok((ds, y))
}

fn model_parts(cfg: &RunConfig, d: usize) -> Result<(MeanFunction, Kernel), CliError> {
    let mean = cfg.mean.to_mean();
    let kernel = cfg.kernel.to_kernel()?;
    mean.validate(d)?;
    kernel.validate(d)?;
    Ok((mean, kernel))
}

fn attach_priors(
    spec: &PriorSpec,
    mut set: impl FnMut(ParamGroup, &[Prior]) -> gp_core::Result<()>,
    groups: &[ParamGroup],
) -> Result<bool, CliError> {
    let mut any = false;
    for &g in groups {
        let priors = match g {
            ParamGroup::Noise => &spec.noise,
            ParamGroup::Mean => &spec.mean,
            ParamGroup::Kernel => &spec.kernel,
            ParamGroup::Lik => &spec.lik,
            ParamGroup::Latent => &None,
        };
        if let Some(p) = priors {
            set(g, p)?;
            any = true;
        }
    }
    for (key, given, allowed) in [
        ("noise-prior", &spec.noise, ParamGroup::Noise),
        ("lik-prior", &spec.lik, ParamGroup::Lik),
    ] {
        if given.is_some() && !groups.contains(&allowed) {
            return Err(CliError::Config(format!("{key} does not apply to this model")));
        }
    }
    Ok(any)
}

fn exact_model(cfg: &RunConfig, ds: &Dataset, y: DVector<f64>) -> Result<(GpExact, bool), CliError> {
    if cfg.lik.is_some() {
        return Err(CliError::Config("a likelihood is only used by the mcmc command".into()));
    }
    let (mean, kernel) = model_parts(cfg, ds.x.nrows())?;
    let mut gp = GpExact::fit(ds.x.clone(), y, mean, kernel, cfg.log_noise)?;
    let has_priors = attach_priors(
        &cfg.priors,
        |g, p| gp.set_priors(g, p),
        &[ParamGroup::Noise, ParamGroup::Mean, ParamGroup::Kernel],
    )?;
    if let Some(path) = &cfg.params {
        let values = read_params(path, &gp.param_names())?;
        gp.set_params(&values)?;
    }
    Ok((gp, has_priors))
}

/// Reads the leading parameter lines of a file written by `fit`, checking
/// names positionally against the model.
pub fn read_params(path: &Path, names: &[String]) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut entries = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_once('=').map(|(k, v)| (k.trim(), v.trim())));
    names
        .iter()
        .map(|name| match entries.next().flatten() {
            Some((k, v)) if k == name => v
                .parse::<f64>()
                .map_err(|_| CliError::Data(format!("{}: cannot parse value of '{k}'", path.display()))),
            other => Err(CliError::Config(format!(
                "{}: expected parameter '{name}', found {}; the file does not match the configured model",
                path.display(),
                other.map_or("nothing".into(), |(k, _)| format!("'{k}'"))
            ))),
        })
        .collect()
}

fn run_optimizer<M: Objective>(model: &mut M, groups: Groups, cfg: &RunConfig, map: bool) -> Result<String, CliError> {
    let opts = OptimizeOptions {
        noise: groups.noise,
        domean: groups.mean,
        kern: groups.kernel,
        lik: groups.lik,
        max_iterations: cfg.max_iter,
        ..OptimizeOptions::default()
    };
    let result = if map { map_optimize(model, &opts)? } else { optimize(model, &opts)? };
    Ok(format!(
        "iterations = {}\nconverged = {}\ngradient_norm = {}\n",
        result.iterations,
        result.converged,
        fmt_f64(result.gradient_norm)
    ))
}

fn params_text(names: &[String], values: &[f64]) -> String {
    names.iter().zip(values).map(|(n, v)| format!("{n} = {}\n", fmt_f64(*v))).collect()
}

fn write_text(path: PathBuf, text: &str) -> Result<PathBuf, CliError> {
    fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn fit(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let (ds, y) = training_data(cfg)?;
    let (mut gp, map) = exact_model(cfg, &ds, y)?;
    let initial = gp.log_marginal();
    let groups = cfg.optimize.unwrap_or(Groups::ALL);
    let report = if groups.any() { run_optimizer(&mut gp, groups, cfg, map)? } else { String::new() };
    println!("log marginal likelihood: {} -> {}", fmt_f64(initial), fmt_f64(gp.log_marginal()));

    let mut text = String::from("# fitted parameters in model order\n");
    text += &params_text(&gp.param_names(), &gp.params());
    text += &format!("mll = {}\ninitial_mll = {}\n", fmt_f64(gp.log_marginal()), fmt_f64(initial));
    if map {
        text += &format!("log_posterior = {}\n", fmt_f64(gp.log_posterior()));
    }
    text += &report;
    Ok(vec![write_text(cfg.out.join("params.txt"), &text)?, write_text(cfg.out.join("summary.txt"), &gp.to_string())?])
}

fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    let step = (stop - start) / (count - 1) as f64;
    (0..count).map(|i| if i + 1 == count { stop } else { start + step * i as f64 }).collect()
}

/// Prediction inputs: the configured grid, or the training inputs.
fn prediction_inputs(cfg: &RunConfig, ds: &Dataset) -> Result<DMatrix<f64>, CliError> {
    let d = ds.x.nrows();
    let xs = match &cfg.grid {
        None => ds.x.clone(),
        Some(Grid::Linspace { start, stop, count }) => {
            if d != 1 {
                return Err(CliError::Config(format!(
                    "grid start:stop:count needs one input column, the data have {d}; pass a grid file instead"
                )));
            }
            DMatrix::from_row_slice(1, *count, &linspace(*start, *stop, *count))
        }
        Some(Grid::File(path)) => load_csv(path, &[], None)?.x,
    };
    if xs.nrows() != d {
        return Err(CliError::Data(format!("prediction inputs have {} columns, the data have {d}", xs.nrows())));
    }
    Ok(xs)
}

fn predict(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let (ds, y) = training_data(cfg)?;
    let (mut gp, map) = exact_model(cfg, &ds, y)?;
    let groups = cfg.optimize.unwrap_or(Groups::NONE);
    if groups.any() {
        run_optimizer(&mut gp, groups, cfg, map)?;
    }
    let xs = prediction_inputs(cfg, &ds)?;
    let (mean, var) = if cfg.latent { gp.predict_f(&xs)? } else { gp.predict_y(&xs)? };
    let path = cfg.out.join("predictions.csv");
    write_predictions(&path, &ds.x_names, &xs, &mean, &var)?;
    Ok(vec![path])
}

/// Mixture moments over per-sample predictions: rows are samples.
fn pool(means: &DMatrix<f64>, vars: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let s = means.nrows() as f64;
    let mean = means.row_mean().transpose();
    let var = DVector::from_fn(means.ncols(), |j, _| {
        let within = vars.column(j).sum() / s;
        let between = means.column(j).iter().map(|m| (m - mean[j]).powi(2)).sum::<f64>() / s;
        within + between
    });
    (mean, var)
}

fn run_mcmc(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let (ds, y) = training_data(cfg)?;
    let mut written = Vec::new();
    let (chain, pred) = match &cfg.lik {
        None => {
            let (mut gp, _) = exact_model(cfg, &ds, y)?;
            let chain = mcmc(&mut gp, &cfg.hmc)?;
            let pred = match cfg.grid {
                None => None,
                Some(_) => {
                    let xs = prediction_inputs(cfg, &ds)?;
                    let mut means = DMatrix::zeros(chain.samples.ncols(), xs.ncols());
                    let mut vars = means.clone();
                    for (k, sample) in chain.samples.column_iter().enumerate() {
                        gp.set_params(sample.as_slice())?;
                        let (m, v) = if cfg.latent { gp.predict_f(&xs)? } else { gp.predict_y(&xs)? };
                        means.row_mut(k).copy_from(&m.transpose());
                        vars.row_mut(k).copy_from(&v.transpose());
                    }
                    Some((xs, pool(&means, &vars)))
                }
            };
            (chain, pred)
        }
        Some(spec) => {
            let (mean, kernel) = model_parts(cfg, ds.x.nrows())?;
            let mut gp = GpMc::new(ds.x.clone(), y, mean, kernel, spec.to_likelihood())?;
            attach_priors(&cfg.priors, |g, p| gp.set_priors(g, p), &[ParamGroup::Lik, ParamGroup::Mean, ParamGroup::Kernel])?;
            let chain = mcmc(&mut gp, &cfg.hmc)?;
            let pred = match cfg.grid {
                None => None,
                Some(_) if cfg.latent => {
                    return Err(CliError::Config("latent predictions are not available for mcmc with a likelihood".into()))
                }
                Some(_) => {
                    let xs = prediction_inputs(cfg, &ds)?;
                    let p = gp.predict_y(&chain.samples, &xs, DEFAULT_QUAD_ORDER)?;
                    Some((xs, pool(&p.mean, &p.variance)))
                }
            };
            (chain, pred)
        }
    };
    println!("acceptance rate: {:.3}, kept samples: {}", chain.acceptance_rate, chain.samples.ncols());
    let path = cfg.out.join("samples.csv");
    write_table(&path, &chain.names, chain.samples.column_iter().map(|c| c.iter().copied().collect()))?;
    written.push(path);
    if let Some((xs, (mean, var))) = pred {
        let path = cfg.out.join("predictions.csv");
        write_predictions(&path, &ds.x_names, &xs, &mean, &var)?;
        written.push(path);
    }
    Ok(written)
}

fn inducing_points(spec: &Inducing, x: &DMatrix<f64>) -> Result<DMatrix<f64>, CliError> {
    let (d, n) = x.shape();
    let xu = match spec {
        Inducing::File(path) => load_csv(path, &[], None)?.x,
        Inducing::Count(m) if d == 1 => {
            let probs: Vec<f64> = (0..*m).map(|i| (i as f64 + 0.5) / *m as f64).collect();
            DMatrix::from_row_slice(1, *m, &quantiles(x.row(0).transpose().as_slice(), &probs))
        }
        Inducing::Count(m) => {
            let m = (*m).min(n);
            DMatrix::from_fn(d, m, |i, j| x[(i, j * n / m)])
        }
    };
    if xu.nrows() != d {
        return Err(CliError::Data(format!("inducing points have {} columns, the data have {d}", xu.nrows())));
    }
    Ok(xu)
}

fn block_labels(path: &Path, n: usize) -> Result<Vec<Vec<usize>>, CliError> {
    let labels = load_csv(path, &[Column::Index(1)], None)?.x;
    if labels.ncols() != n {
        return Err(CliError::Data(format!("{}: {} block labels for {n} observations", path.display(), labels.ncols())));
    }
    let mut keyed: Vec<(i64, usize)> = Vec::with_capacity(n);
    for (i, &v) in labels.iter().enumerate() {
        if v.fract() != 0.0 {
            return Err(CliError::Data(format!("{}: block label {v} is not an integer", path.display())));
        }
        keyed.push((v as i64, i));
    }
    keyed.sort();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut last = None;
    for (label, i) in keyed {
        if last != Some(label) {
            blocks.push(Vec::new());
            last = Some(label);
        }
        blocks.last_mut().expect("pushed above").push(i);
    }
    Ok(blocks)
}

fn sparse(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let kind = cfg.scheme.ok_or_else(|| CliError::Config("the sparse command needs --scheme".into()))?;
    if cfg.lik.is_some() {
        return Err(CliError::Config("sparse approximations use Gaussian noise; drop --lik".into()));
    }
    let (ds, y) = training_data(cfg)?;
    let xu = inducing_points(cfg.inducing.as_ref().unwrap_or(&Inducing::Count(12)), &ds.x)?;
    let scheme = match kind {
        SchemeKind::Sor => Scheme::Sor,
        SchemeKind::Dtc => Scheme::Dtc,
        SchemeKind::Fitc => Scheme::Fitc,
        SchemeKind::Fsa => Scheme::Fsa {
            blocks: match &cfg.blocks {
                Blocks::Nearest => nearest_inducing_blocks(&ds.x, &xu),
                Blocks::File(path) => block_labels(path, ds.x.ncols())?,
            },
        },
    };
    let (mean, kernel) = model_parts(cfg, ds.x.nrows())?;
    let mut gp = SparseGp::fit(scheme, ds.x.clone(), xu, y, mean, kernel, cfg.log_noise)?;
    let map = attach_priors(
        &cfg.priors,
        |g, p| gp.set_priors(g, p),
        &[ParamGroup::Noise, ParamGroup::Mean, ParamGroup::Kernel],
    )?;
    if let Some(path) = &cfg.params {
        let values = read_params(path, &gp.param_names())?;
        gp.set_params(&values)?;
    }
    let groups = cfg.optimize.unwrap_or(Groups::NONE);
    let report = if groups.any() { run_optimizer(&mut gp, groups, cfg, map)? } else { String::new() };

    let mut text = format!("# {} approximation, parameters in model order\n", gp.scheme().name());
    text += &params_text(&gp.param_names(), &gp.params());
    text += &format!("mll = {}\n", fmt_f64(gp.log_marginal()));
    text += &report;
    let params = write_text(cfg.out.join("params.txt"), &text)?;

    let xs = prediction_inputs(cfg, &ds)?;
    let (m, v) = if cfg.latent { gp.predict_f(&xs)? } else { gp.predict_y(&xs)? };
    let path = cfg.out.join("predictions.csv");
    write_predictions(&path, &ds.x_names, &xs, &m, &v)?;
    Ok(vec![params, path])
}

fn bench(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let b = &cfg.bench;
    let (x, y) = bench_data(b.n, b.d, cfg.seed);
    let mut rows = Vec::new();
    for (text, expr) in &b.kernels {
        let kernel = expr.to_kernel()?;
        kernel.validate(b.d)?;
        let mut gp = GpExact::fit(x.clone(), y.clone(), MeanFunction::Zero, kernel, 0.0)?;
        let params = gp.params();
        let t = time_min(b.runs, || -> Result<(), CliError> {
            gp.set_params(&params)?;
            std::hint::black_box(gp.grad_log_marginal());
            Ok(())
        })?;
        println!("{text}: {:.3} ms", t.min_ms);
        rows.push(format!("\"{}\",{:.3},{}", text.replace('"', "\"\""), t.min_ms, t.allocs));
    }
    let path = cfg.out.join("bench.csv");
    write_text(path.clone(), &(String::from("kernel,min_ms,allocs\n") + &rows.join("\n") + "\n"))?;

    let sparse_rows = sparse_suite(b.sparse_n, b.sparse_m, b.runs, cfg.seed)?;
    for (name, t) in &sparse_rows {
        println!("{name}: {:.3} ms", t.min_ms);
    }
    let lines: Vec<String> = sparse_rows.iter().map(|(name, t)| format!("{name},{:.3},{}", t.min_ms, t.allocs)).collect();
    let sparse_path = cfg.out.join("sparse_bench.csv");
    write_text(sparse_path.clone(), &(String::from("method,min_ms,allocs\n") + &lines.join("\n") + "\n"))?;
    Ok(vec![path, sparse_path])
}

/// Fit times for the exact GP and each sparse scheme on the sparse demo
/// data, with inducing points at the demo's quantiles (or `m` evenly
/// spaced quantiles when `m` differs from the demo's twelve).
pub fn sparse_suite(n: usize, m: usize, runs: usize, seed: u64) -> Result<Vec<(&'static str, crate::bench::Timing)>, CliError> {
    let (x, y) = sparse_demo_data(n, 10.0, seed);
    let xs = x.row(0).transpose();
    let probs: Vec<f64> = if m == SPARSE_DEMO_QUANTILES.len() {
        SPARSE_DEMO_QUANTILES.to_vec()
    } else {
        (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect()
    };
    let xu = DMatrix::from_row_slice(1, m, &quantiles(xs.as_slice(), &probs));
    let mean = MeanFunction::Const(y.mean());
    let kernel = Kernel::se_iso(0.0, 0.0);
    let log_noise = 10f64.ln();
    let blocks = nearest_inducing_blocks(&x, &xu);

    let mut out = Vec::new();
    let t = time_min(runs, || -> Result<(), CliError> {
        std::hint::black_box(GpExact::fit(x.clone(), y.clone(), mean.clone(), kernel.clone(), log_noise)?);
        Ok(())
    })?;
    out.push(("Exact", t));
    for scheme in [Scheme::Sor, Scheme::Dtc, Scheme::Fitc, Scheme::Fsa { blocks }] {
        let name = scheme.name();
        let t = time_min(runs, || -> Result<(), CliError> {
            let gp = SparseGp::fit(scheme.clone(), x.clone(), xu.clone(), y.clone(), mean.clone(), kernel.clone(), log_noise)?;
            std::hint::black_box(gp);
            Ok(())
        })?;
        out.push((name, t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_hits_both_ends() {
        assert_eq!(linspace(0.0, 1.0, 5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
    }

    #[test]
    fn pooled_moments_follow_total_variance() {
        let means = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        let vars = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let (m, v) = pool(&means, &vars);
        assert_eq!(m[0], 1.0);
        assert_eq!(v[0], 2.0 + 1.0);
    }

    #[test]
    fn params_must_match_the_model() {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), "# header\nNoise = -1.5\nSE log length = 0.25\nmll = 3\n").unwrap();
        let names = vec!["Noise".to_string(), "SE log length".to_string()];
        assert_eq!(read_params(f.path(), &names).unwrap(), vec![-1.5, 0.25]);
        let wrong = vec!["Noise".to_string(), "RQ log length".to_string()];
        assert!(matches!(read_params(f.path(), &wrong), Err(CliError::Config(_))));
    }
}
