#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mrfa::selection::Criterion;
use mrfa::ErrorKind;
use thiserror::Error;

use config::RunConfig;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] mrfa::Error),
    #[error("write failed: {0}")]
    Write(#[from] std::io::Error),
    #[error("CSV output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Write(_) | CliError::Csv(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Numeric => 3,
                ErrorKind::Capacity => 4,
            },
        }
    }
}

/// Multi-resolution functional ANOVA emulators for large-scale computer experiments.
#[derive(Parser, Debug)]
#[command(name = "mrfa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML file with any of the flag settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "MRFA_THREADS")]
    threads: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Print the merged settings as TOML and exit without running.
    #[arg(long, global = true)]
    dump_config: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model to a training CSV and write it with a path report.
    Fit(FitArgs),
    /// Predict at the rows of a CSV.
    Predict(PredictArgs),
    /// Confidence intervals for the mean response at the rows of a CSV.
    Ci(CiArgs),
    /// Run one benchmark function end to end.
    Bench(BenchArgs),
}

/// Settings that map onto [`RunConfig`].
#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// Name of the response column.
    #[arg(long)]
    response: Option<String>,
    /// Highest interaction order.
    #[arg(long)]
    dmax: Option<usize>,
    /// Highest resolution level.
    #[arg(long)]
    rmax: Option<u32>,
    /// Geometric decrease of lambda along the path.
    #[arg(long)]
    rho: Option<f64>,
    /// det, aic, bic or cv:K.
    #[arg(long)]
    criterion: Option<String>,
    /// Intervals have level 1 - alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// ridge, lasso or apley.
    #[arg(long = "ci-variant")]
    ci_variant: Option<String>,
    /// Seeds fold assignment and benchmark designs.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout for tables when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Training CSV with a header row.
    train: PathBuf,
    /// Path-report CSV (default: next to the model, `<stem>.path.csv`).
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    model: PathBuf,
    test: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct CiArgs {
    model: PathBuf,
    train: PathBuf,
    test: PathBuf,
    /// Column of `test` holding true mean values; enables the metrics footer.
    /// Defaults to the response column when the test file has one.
    #[arg(long)]
    truth: Option<String>,
    /// Folds for the lasso penalty and coverage searches.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Fixed noise variance instead of the estimated one.
    #[arg(long)]
    sigma2: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Test function name.
    name: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long = "n-test", default_value_t = 10_000)]
    n_test: usize,
    /// Copies of each training location (n must be a multiple).
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Noise standard deviation instead of the function's default.
    #[arg(long = "noise-sd")]
    noise_sd: Option<f64>,
    /// Also compute intervals at the test points.
    #[arg(long)]
    ci: bool,
    #[command(flatten)]
    common: CommonArgs,
}

impl CommonArgs {
    fn to_config(&self) -> Result<RunConfig, CliError> {
        let criterion = self
            .criterion
            .as_deref()
            .map(str::parse::<Criterion>)
            .transpose()?;
        Ok(RunConfig {
            response: self.response.clone(),
            dmax: self.dmax,
            rmax: self.rmax,
            rho: self.rho,
            criterion,
            alpha: self.alpha,
            ci_variant: self.ci_variant.clone(),
            seed: self.seed,
            out: self.out.clone(),
            ..RunConfig::default()
        })
    }
}

fn resolve(global: &GlobalArgs, common: &CommonArgs) -> Result<RunConfig, CliError> {
    let file = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut flags = common.to_config()?;
    flags.threads = global.threads;
    let cfg = file.overlay(flags);
    cfg.validate().map_err(CliError::Input)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Fit(a) => &a.common,
        Command::Predict(a) => &a.common,
        Command::Ci(a) => &a.common,
        Command::Bench(a) => &a.common,
    };
    let cfg = resolve(&cli.global, common)?;
    if cli.global.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    if let Some(t) = cfg.threads {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Fit(a) => commands::fit(a, &cfg),
        Command::Predict(a) => commands::predict(a, &cfg),
        Command::Ci(a) => commands::ci(a, &cfg),
        Command::Bench(a) => commands::bench(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
