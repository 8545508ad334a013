use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dfrc-sg", version, about = "Radar/communication coexistence metrics on a two-lane road")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate metrics with the analytic expressions.
    Analytic(EvalArgs),
    /// Estimate metrics by simulation.
    Mc(EvalArgs),
    /// Run both and compare against `--pass`.
    Validate(EvalArgs),
    /// Evaluate over threshold grids (`start:stop:step`).
    Sweep(EvalArgs),
    /// Grid search of the transmit powers maximizing JRSCCP.
    Optimize(OptimizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IcMode {
    None,
    Partial,
    /// Cancellation at both receivers.
    Perfect,
    PerfectRadar,
    PerfectComm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sampling {
    Rejection,
    InverseCdf,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario JSON (or a previous run manifest).
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Residual interference model; overrides the configuration.
    #[arg(long, value_enum)]
    pub ic: Option<IcMode>,
    #[arg(long, requires = "ic")]
    pub a: Option<f64>,
    #[arg(long, requires = "ic")]
    pub b: Option<f64>,

    /// Vehicle transmit power override.
    #[arg(long, allow_negative_numbers = true)]
    pub pv_dbm: Option<f64>,
    /// Traffic-light transmit power override.
    #[arg(long, allow_negative_numbers = true)]
    pub pl_dbm: Option<f64>,

    /// Absolute accuracy of each analytic metric.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Accuracy of the tabulated interference CDF.
    #[arg(long, default_value_t = 1e-6)]
    pub cdf_tol: f64,

    /// Output file; a `<out>.manifest.json` is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Write the interference CDF table (`x,F`); defaults to `<out>.cdf.csv`.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    pub dump_cdf: Option<String>,

    /// Invert the characteristic function on every CDF query instead of
    /// interpolating a table.
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,

    /// Comma-separated metric names.
    #[arg(long = "metric", alias = "metrics", value_delimiter = ',', required = true)]
    pub metrics: Vec<String>,

    /// Communication SIR threshold (dB), a value or `start:stop:step`.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_db: Option<String>,
    /// Radar SIR threshold (dB).
    #[arg(long, allow_hyphen_values = true)]
    pub theta_p_db: Option<String>,
    /// Detection threshold (dBm).
    #[arg(long, allow_hyphen_values = true, conflicts_with = "pfa")]
    pub gamma_dbm: Option<String>,
    /// Target false-alarm probability; the detection threshold is solved for.
    #[arg(long)]
    pub pfa: Option<String>,
    /// Rate threshold (bit/s/Hz) for `rate_cdf`.
    #[arg(long)]
    pub eta: Option<String>,
    /// Truncation of `avg_rate` (bit/s/Hz).
    #[arg(long, default_value_t = 20.0)]
    pub max_eta: f64,

    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Sampling::Rejection)]
    pub sampling: Sampling,
    /// Clopper-Pearson instead of normal-approximation intervals.
    #[arg(long)]
    pub exact_ci: bool,

    /// Largest accepted |analytic - MC| for `validate`.
    #[arg(long = "pass", default_value_t = 0.01)]
    pub pass_tol: f64,

    /// Add simulation rows to a sweep.
    #[arg(long)]
    pub with_mc: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long, allow_hyphen_values = true)]
    pub theta_db: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub theta_p_db: f64,

    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub pl_min_dbm: f64,
    #[arg(long, default_value_t = 60.0, allow_hyphen_values = true)]
    pub pl_max_dbm: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub pv_min_dbm: f64,
    #[arg(long, default_value_t = 60.0, allow_hyphen_values = true)]
    pub pv_max_dbm: f64,
    #[arg(long, default_value_t = 1.0)]
    pub resolution_db: f64,

    /// Search the full 2-D grid and check it against the ratio search.
    #[arg(long)]
    pub no_ratio_reduction: bool,
}

/// Values of a `start:stop:step` grid, or a single value.
pub fn parse_grid(name: &'static str, s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("--{name}: `{t}` is not a number"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(vec![num(v)?]),
        [a, b, c] => {
            let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
            if !(step > 0.0) || stop < start {
                return Err(format!("--{name}: grid `{s}` needs step > 0 and stop >= start"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            if n > 1_000_000 {
                return Err(format!("--{name}: grid `{s}` is too large"));
            }
            Ok((0..=n).map(|k| round9(start + k as f64 * step)).collect())
        }
        _ => Err(format!("--{name}: expected a value or start:stop:step, got `{s}`")),
    }
}

fn round9(x: f64) -> f64 {
    let r = (x * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}
