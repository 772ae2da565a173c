//! `qfa`: quantile-frequency analysis from the command line.
//!
//! Exit status: 0 success, 1 internal error, 2 input error, 3 fit did not
//! converge (outputs are still written).

// Guards of the form `!(x <= y)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qfa_core::Error;

#[derive(Debug, Parser)]
#[command(name = "qfa", version, about = "Quantile periodograms and spectral divergence diagnostics")]
pub struct Cli {
    /// Root seed of every random stream; falls back to QFA_SEED, then the
    /// config file, then a fresh seed that is printed and recorded.
    #[arg(long, global = true, env = "QFA_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism). Outputs do not
    /// depend on this value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON config file; flags take precedence over its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Log returns from a price file.
    Returns(ReturnsArgs),
    /// Raw, normalized and cumulative quantile periodograms.
    Qfa(QfaArgs),
    /// Gaussian quasi-likelihood fit with Ljung-Box and LM diagnostics.
    Fit(FitArgs),
    /// Simulate a series from a model file.
    Simulate(SimulateArgs),
    /// Bootstrap test of residuals, or of a series against a model.
    Test(TestArgs),
    /// Metric sensitivity to the location of a narrowband deviation.
    Sensitivity(SensitivityArgs),
}

#[derive(Debug, Args)]
pub struct ReturnsArgs {
    pub prices: PathBuf,
    #[arg(long, default_value = "date")]
    pub date_column: String,
    #[arg(long, default_value = "close")]
    pub close_column: String,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    pub input: PathBuf,
    /// Value column (default: the last column of the header).
    #[arg(long)]
    pub column: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    First,
    Second,
}

#[derive(Debug, Args)]
pub struct QfaArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Quantile levels as lo:hi:step or a comma-separated list.
    #[arg(long)]
    pub alphas: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Garch,
    Gjr,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub model: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Residual,
    Direct,
    Discriminant,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RegionArg {
    Full,
    Middle,
    Lower,
    Upper,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Residuals (residual mode) or the observed series.
    #[command(flatten)]
    pub input: InputArgs,
    /// Model file (direct and discriminant modes).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Series the model was fitted on (discriminant mode).
    #[arg(long)]
    pub model_series: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub region: Option<RegionArg>,
    /// Closed level interval lo:hi replacing the preset's levels.
    #[arg(long)]
    pub levels: Option<String>,
    /// Closed frequency band lo:hi in cycles per sample.
    #[arg(long)]
    pub band: Option<String>,
    /// Bootstrap replicates.
    #[arg(long = "replicates", short = 'B', alias = "B")]
    pub replicates: Option<usize>,
    /// Realizations behind the model-implied target.
    #[arg(long)]
    pub realizations: Option<usize>,
    #[arg(long)]
    pub alphas: Option<String>,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Leading residuals dropped in residual mode.
    #[arg(long)]
    pub drop_head: Option<usize>,
    /// Use (count + 1)/(B + 1) instead of count/B.
    #[arg(long)]
    pub plus_one: bool,
    /// Omit the full null matrix from the report.
    #[arg(long)]
    pub elide_null: bool,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub rho: Option<f64>,
    /// Bump spread in radians per sample.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Bump centers in cycles per sample, lo:hi:step or a list.
    #[arg(long)]
    pub centers: Option<String>,
    /// Number of Fourier frequencies.
    #[arg(long = "K", alias = "k")]
    pub k: Option<usize>,
}

fn exit_code(err: &Error) -> u8 {
    if err.is_input_error() || matches!(err, Error::Io(_)) {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::NotConverged) => {
            eprintln!("warning: optimizer did not converge; best incumbent written");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
