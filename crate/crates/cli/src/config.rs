//! Run configuration: a flat `key = value` file merged with command-line
//! flags, flags taking precedence.

use std::collections::BTreeMap;
use std::path::PathBuf;

use gp_core::{HmcConfig, Prior};

use crate::data::Column;
use crate::parser::{parse_kernel, parse_lik, parse_mean, parse_priors, KernelExpr, LikSpec, MeanExpr};
use crate::CliError;

/// Every recognised key. Flags use the same names with a `--` prefix.
pub const KEYS: &[&str] = &[
    "data",
    "x-cols",
    "y-col",
    "kernel",
    "mean",
    "lik",
    "log-noise",
    "optimize",
    "max-iter",
    "params",
    "scheme",
    "inducing",
    "blocks",
    "grid",
    "predict",
    "seed",
    "out",
    "n-iter",
    "burn",
    "thin",
    "epsilon",
    "l-min",
    "l-max",
    "noise-prior",
    "mean-prior",
    "kernel-prior",
    "lik-prior",
    "bench-kernels",
    "bench-n",
    "bench-d",
    "bench-runs",
    "sparse-n",
    "sparse-m",
];

/// Kernel column of the benchmark table, in table order.
pub const BENCH_KERNELS: &[&str] = &[
    "fix(SE(0.0,0.0), σ)",
    "SE(0.0,0.0)",
    "Matern(1/2,0.0,0.0)",
    "Masked(SE(0.0,0.0), [1])",
    "RQ(0.0,0.0,0.0)",
    "SE(0.0,0.0) + RQ(0.0,0.0,0.0)",
    "Masked(SE(0.0,0.0), [1]) + Masked(RQ(0.0,0.0,0.0), collect(2:10))",
    "(SE(0.0,0.0) + SE(0.5,0.5)) * RQ(0.0,0.0,0.0)",
    "SE(0.0,0.0) * RQ(0.0,0.0,0.0)",
];

/// Raw settings after merging the file and the flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses a config file. Blank lines and lines starting with `#` are
    /// ignored; later duplicates win.
    pub fn from_file_text(text: &str) -> Result<Settings, CliError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(CliError::Config(format!("config line {}: unknown key '{key}'", i + 1)));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Settings { values })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(KEYS.contains(&key), "unregistered key {key}");
        self.values.insert(key.to_string(), value.into());
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(mut self, other: Settings) -> Settings {
        self.values.extend(other.values);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse '{v}'"))),
        }
    }
}

/// Which parameter groups an optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Groups {
    pub noise: bool,
    pub mean: bool,
    pub kernel: bool,
    pub lik: bool,
}

impl Groups {
    pub const ALL: Groups = Groups { noise: true, mean: true, kernel: true, lik: true };
    pub const NONE: Groups = Groups { noise: false, mean: false, kernel: false, lik: false };

    pub fn any(&self) -> bool {
        self.noise || self.mean || self.kernel || self.lik
    }

    /// `all`, `none`/`false`, `true`, or a list such as `noise,kernel`.
    pub fn parse(text: &str) -> Result<Groups, CliError> {
        match text.trim() {
            "all" | "true" => return Ok(Groups::ALL),
            "none" | "false" => return Ok(Groups::NONE),
            _ => {}
        }
        let mut g = Groups::NONE;
        for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match part {
                "noise" => g.noise = true,
                "mean" => g.mean = true,
                "kernel" | "kern" => g.kernel = true,
                "lik" => g.lik = true,
                other => return Err(CliError::Config(format!("optimize: unknown parameter group '{other}'"))),
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Sor,
    Dtc,
    Fitc,
    Fsa,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    /// `start:stop:count`, evenly spaced and inclusive.
    Linspace { start: f64, stop: f64, count: usize },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Inducing {
    /// `m` points at evenly spaced quantiles (one input dimension) or an
    /// evenly strided subset of the training inputs.
    Count(usize),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Blocks {
    /// Each training point joins the block of its nearest inducing point.
    Nearest,
    /// One integer label per training row.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub noise: Option<Vec<Prior>>,
    pub mean: Option<Vec<Prior>>,
    pub kernel: Option<Vec<Prior>>,
    pub lik: Option<Vec<Prior>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub kernels: Vec<(String, KernelExpr)>,
    pub n: usize,
    pub d: usize,
    pub runs: usize,
    pub sparse_n: usize,
    pub sparse_m: usize,
}

/// Validated configuration shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub x_cols: Vec<Column>,
    pub y_col: Column,
    pub kernel: KernelExpr,
    pub mean: MeanExpr,
    pub lik: Option<LikSpec>,
    pub log_noise: f64,
    pub optimize: Option<Groups>,
    pub max_iter: usize,
    pub params: Option<PathBuf>,
    pub scheme: Option<SchemeKind>,
    pub inducing: Option<Inducing>,
    pub blocks: Blocks,
    pub grid: Option<Grid>,
    pub latent: bool,
    pub seed: u64,
    pub out: PathBuf,
    pub hmc: HmcConfig,
    pub priors: PriorSpec,
    pub bench: BenchConfig,
}

fn priors(s: &Settings, key: &str) -> Result<Option<Vec<Prior>>, CliError> {
    s.get(key).map(|v| parse_priors(v).map_err(|e| CliError::Parse(format!("{key}: {e}")))).transpose()
}

impl RunConfig {
    pub fn from_settings(s: &Settings) -> Result<RunConfig, CliError> {
        let kernel_text = s.get("kernel").unwrap_or("SE(0.0,0.0)");
        let kernel = parse_kernel(kernel_text).map_err(|e| CliError::Parse(format!("kernel: {e}")))?;
        let mean = parse_mean(s.get("mean").unwrap_or("MeanZero()")).map_err(|e| CliError::Parse(format!("mean: {e}")))?;
        let lik = s.get("lik").map(|t| parse_lik(t).map_err(|e| CliError::Parse(format!("lik: {e}")))).transpose()?;

        let optimize = s.get("optimize").map(Groups::parse).transpose()?;
        let scheme = s
            .get("scheme")
            .map(|v| match v.to_ascii_lowercase().as_str() {
                "sor" => Ok(SchemeKind::Sor),
                "dtc" => Ok(SchemeKind::Dtc),
                "fitc" => Ok(SchemeKind::Fitc),
                "fsa" => Ok(SchemeKind::Fsa),
                other => Err(CliError::Config(format!("scheme: expected sor, dtc, fitc or fsa, got '{other}'"))),
            })
            .transpose()?;
        let inducing = s.get("inducing").map(|v| match v.parse::<usize>() {
            Ok(m) => Inducing::Count(m),
            Err(_) => Inducing::File(PathBuf::from(v)),
        });
        if inducing == Some(Inducing::Count(0)) {
            return Err(CliError::Config("inducing: need at least one inducing point".into()));
        }
        let blocks = match s.get("blocks") {
            None | Some("nearest") => Blocks::Nearest,
            Some(path) => Blocks::File(PathBuf::from(path)),
        };
        let grid = s.get("grid").map(parse_grid).transpose()?;
        let latent = match s.get("predict").unwrap_or("y") {
            "y" => false,
            "f" => true,
            other => return Err(CliError::Config(format!("predict: expected y or f, got '{other}'"))),
        };

        let seed = s.parsed("seed", 0u64)?;
        let hmc = HmcConfig {
            epsilon: s.parsed("epsilon", 0.01)?,
            l_min: s.parsed("l-min", 5)?,
            l_max: s.parsed("l-max", 15)?,
            n_iter: s.parsed("n-iter", 1000)?,
            burn: s.parsed("burn", 0)?,
            thin: s.parsed("thin", 1)?,
            seed,
            frozen: vec![],
        };
        hmc.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let bench_kernels = match s.get("bench-kernels") {
            Some(list) => list.split(';').map(str::trim).filter(|k| !k.is_empty()).map(String::from).collect(),
            None => BENCH_KERNELS.iter().map(|k| k.to_string()).collect::<Vec<_>>(),
        };
        let kernels = bench_kernels
            .into_iter()
            .map(|text| {
                let expr = parse_kernel(&text).map_err(|e| CliError::Parse(format!("bench-kernels: {e}")))?;
                Ok((text, expr))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let bench = BenchConfig {
            kernels,
            n: s.parsed("bench-n", 3000)?,
            d: s.parsed("bench-d", 10)?,
            runs: s.parsed("bench-runs", 10)?,
            sparse_n: s.parsed("sparse-n", 5000)?,
            sparse_m: s.parsed("sparse-m", 12)?,
        };
        if bench.n == 0 || bench.d == 0 || bench.runs == 0 || bench.sparse_n == 0 || bench.sparse_m == 0 {
            return Err(CliError::Config("bench sizes and run counts must be positive".into()));
        }

        Ok(RunConfig {
            data: s.get("data").map(PathBuf::from),
            x_cols: s.get("x-cols").map(Column::parse_list).unwrap_or_default(),
            y_col: s.get("y-col").map(Column::parse).unwrap_or(Column::Last),
            kernel,
            mean,
            lik,
            log_noise: s.parsed("log-noise", 0.0)?,
            optimize,
            max_iter: s.parsed("max-iter", 200)?,
            params: s.get("params").map(PathBuf::from),
            scheme,
            inducing,
            blocks,
            grid,
            latent,
            seed,
            out: PathBuf::from(s.get("out").unwrap_or(".")),
            hmc,
            priors: PriorSpec {
                noise: priors(s, "noise-prior")?,
                mean: priors(s, "mean-prior")?,
                kernel: priors(s, "kernel-prior")?,
                lik: priors(s, "lik-prior")?,
            },
            bench,
        })
    }

    pub fn require_data(&self) -> Result<&PathBuf, CliError> {
        self.data.as_ref().ok_or_else(|| CliError::Config("no data file given (use --data)".into()))
    }
}

fn parse_grid(text: &str) -> Result<Grid, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Ok(Grid::File(PathBuf::from(text)));
    }
    let bad = || CliError::Config(format!("grid: expected start:stop:count, got '{text}'"));
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if count == 0 || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    Ok(Grid::Linspace { start, stop, count })
}
