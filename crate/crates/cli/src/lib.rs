//! Command-line front end for `gp-core`.
//!
//! Subcommands `fit`, `predict`, `mcmc`, `sparse` and `bench` read a flat
//! `key = value` config file (`--config`) and flags of the same names, with
//! flags taking precedence. Every failure maps to an exit code: 2 for
//! configuration and parse errors, 3 for data and I/O errors, 4 for
//! numerical failures.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod bench;
pub mod commands;
pub mod config;
pub mod data;
pub mod parser;

pub use commands::{execute, Command};
pub use config::{RunConfig, Settings};
pub use gp_core;
pub use parser::{parse_kernel, parse_lik, parse_mean, parse_priors, KernelExpr, LikSpec, MeanExpr, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Parse(_) => "parse",
            CliError::Data(_) => "data",
            CliError::Io(_) => "io",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Parse(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// `error[<category>]: <message>` on a single line.
    pub fn report_line(&self) -> String {
        let msg = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {msg}", self.category())
    }
}

impl From<gp_core::GpError> for CliError {
    fn from(e: gp_core::GpError) -> Self {
        match e {
            gp_core::GpError::Input(_) => CliError::Data(e.to_string()),
            gp_core::GpError::Config(_) => CliError::Config(e.to_string()),
            gp_core::GpError::Numerical { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Parse(e.to_string())
    }
}

macro_rules! flags {
    ($($field:ident => $key:literal : $help:literal),* $(,)?) => {
        /// Options shared by every subcommand.
        #[derive(Args, Debug, Default, Clone)]
        pub struct Flags {
            /// Flat key = value file; flags override its entries.
            #[arg(long)]
            pub config: Option<PathBuf>,
            $(
                #[arg(long = $key, help = $help, allow_hyphen_values = true, value_name = "VALUE")]
                pub $field: Option<String>,
            )*
        }

        impl Flags {
            pub fn settings(&self) -> Settings {
                let mut s = Settings::default();
                $(
                    if let Some(v) = &self.$field {
                        s.set($key, v.clone());
                    }
                )*
                s
            }
        }
    };
}

flags! {
    data => "data": "CSV file of training data",
    x_cols => "x-cols": "Input columns by name or 1-based position, comma separated [default: all but the response]",
    y_col => "y-col": "Response column [default: last]",
    kernel => "kernel": "Kernel expression, e.g. \"SE(0.0,0.0) + Noise(-2.0)\"",
    mean => "mean": "Mean expression [default: MeanZero()]",
    lik => "lik": "Likelihood for mcmc, e.g. PoisLik() [default: exact Gaussian]",
    log_noise => "log-noise": "Log standard deviation of the observation noise [default: 0]",
    optimize => "optimize": "Groups to optimize: all, none, or a list of noise,mean,kernel,lik",
    max_iter => "max-iter": "Optimizer iteration limit [default: 200]",
    params => "params": "Parameter file written by fit, used as the starting point",
    scheme => "scheme": "Sparse scheme: sor, dtc, fitc or fsa",
    inducing => "inducing": "Inducing points: a CSV file or a count [default: 12]",
    blocks => "blocks": "FSA blocks: nearest, or a file of one label per training row",
    grid => "grid": "Prediction inputs: start:stop:count or a CSV file [default: training inputs]",
    predict => "predict": "Predict y (with noise) or f (latent) [default: y]",
    seed => "seed": "Random seed [default: 0]",
    out => "out": "Output directory [default: .]",
    n_iter => "n-iter": "HMC iterations [default: 1000]",
    burn => "burn": "HMC burn-in [default: 0]",
    thin => "thin": "HMC thinning [default: 1]",
    epsilon => "epsilon": "HMC step size [default: 0.01]",
    l_min => "l-min": "Fewest leapfrog steps per iteration [default: 5]",
    l_max => "l-max": "Most leapfrog steps per iteration [default: 15]",
    noise_prior => "noise-prior": "Prior on the log noise, e.g. Normal(0,1)",
    mean_prior => "mean-prior": "Priors on the mean parameters, comma separated",
    kernel_prior => "kernel-prior": "Priors on the kernel parameters, comma separated",
    lik_prior => "lik-prior": "Priors on the likelihood parameters, comma separated",
    bench_kernels => "bench-kernels": "Kernels to benchmark, separated by ';'",
    bench_n => "bench-n": "Benchmark observations [default: 3000]",
    bench_d => "bench-d": "Benchmark covariates [default: 10]",
    bench_runs => "bench-runs": "Timed runs per benchmark [default: 10]",
    sparse_n => "sparse-n": "Observations in the sparse timing suite [default: 5000]",
    sparse_m => "sparse-m": "Inducing points in the sparse timing suite [default: 12]",
}

#[derive(Parser, Debug)]
#[command(name = "gp", version, about = "Gaussian process regression, MCMC and sparse approximations")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Optimize hyperparameters and write params.txt and summary.txt.
    Fit(Flags),
    /// Write predictive mean, variance and 95% bands to predictions.csv.
    Predict(Flags),
    /// Sample hyperparameters (and latent values) with HMC into samples.csv.
    Mcmc(Flags),
    /// Fit a sparse approximation and write params.txt and predictions.csv.
    Sparse(Flags),
    /// Time log-likelihood plus gradient per kernel and the sparse fits.
    Bench(Flags),
}

/// Resolves a command line into a command and its validated configuration.
pub fn configure<I, T>(args: I) -> Result<Option<(Command, RunConfig)>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(None);
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return Err(CliError::Config(first.trim_start_matches("error: ").to_string()));
        }
    };
    let (cmd, flags) = match cli.command {
        Sub::Fit(f) => (Command::Fit, f),
        Sub::Predict(f) => (Command::Predict, f),
        Sub::Mcmc(f) => (Command::Mcmc, f),
        Sub::Sparse(f) => (Command::Sparse, f),
        Sub::Bench(f) => (Command::Bench, f),
    };
    let file = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            Settings::from_file_text(&text)?
        }
        None => Settings::default(),
    };
    let cfg = RunConfig::from_settings(&file.merge(flags.settings()))?;
    Ok(Some((cmd, cfg)))
}

/// Entry point used by the `gp` binary.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    if let Some((cmd, cfg)) = configure(args)? {
        for path in execute(cmd, &cfg)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
