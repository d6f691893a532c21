use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use kfsa::experiments::{self, ExperimentConfig, ExperimentKind, KernelFamily, NystromMode, OutputFormat};
use kfsa::{Backend, ErrorKind};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Experiment {
    Mnist,
    Fpu,
    Calcofi,
    Generic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kernel {
    Gaussian,
    Polynomial,
    Composite,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Nystrom {
    Off,
    Uniform,
    Leverage,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Exec {
    Sequential,
    Parallel,
}

/// Greedy kernel sample selection experiments.
///
/// Settings come from `--config` (TOML) when given; any flag overrides the
/// corresponding file entry. Lists are comma separated.
#[derive(Debug, Parser)]
#[command(name = "kfsa", version)]
struct Cli {
    /// TOML file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, value_enum)]
    experiment: Option<Experiment>,

    #[arg(long, value_enum)]
    kernel: Option<Kernel>,

    /// Kernel parameter grid.
    #[arg(long, value_delimiter = ',')]
    kappa: Option<Vec<f64>>,

    /// Polynomial degree.
    #[arg(long)]
    degree: Option<u32>,

    /// Selection threshold grid.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,

    /// Ridge regularization.
    #[arg(long)]
    gamma: Option<f64>,

    /// Training data: MNIST directory or CSV file.
    #[arg(long)]
    train: Option<PathBuf>,

    /// Test data: MNIST directory or CSV file.
    #[arg(long)]
    test: Option<PathBuf>,

    /// Default location for datasets.
    #[arg(long, env = "KFSA_DATA_DIR")]
    data_dir: Option<PathBuf>,

    /// Training subsample size.
    #[arg(long)]
    subsample: Option<usize>,

    /// Test subsample size.
    #[arg(long)]
    test_subsample: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum)]
    format: Option<Format>,

    /// Compute kernel rows on demand instead of storing the Gram matrix.
    #[arg(long)]
    low_memory: bool,

    #[arg(long, value_enum)]
    nystrom: Option<Nystrom>,

    /// Match the Nyström budget to each kFSA selection size.
    #[arg(long)]
    budget_match: bool,

    /// Fixed Nyström budget.
    #[arg(long)]
    nystrom_budget: Option<usize>,

    #[arg(long, value_enum)]
    backend: Option<Exec>,

    /// FPU chain lengths.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,

    /// FPU samples per trial.
    #[arg(long)]
    samples: Option<usize>,

    /// FPU trials per chain length.
    #[arg(long)]
    trials: Option<usize>,

    /// Skip the all-samples FPU fit.
    #[arg(long)]
    no_full_fit: bool,

    /// CSV input columns.
    #[arg(long, value_delimiter = ',')]
    inputs: Option<Vec<String>>,

    /// CSV output columns.
    #[arg(long, value_delimiter = ',')]
    outputs: Option<Vec<String>>,

    /// Use raw CSV inputs without min-max scaling.
    #[arg(long)]
    no_normalize: bool,

    /// Print the merged configuration, with default grids filled in, as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| ConfigError(format!("invalid config {}: {e}", path.display())).into())
}

fn merge(cli: Cli) -> Result<(ExperimentConfig, bool)> {
    let mut c = match &cli.config {
        Some(p) => read_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = cli.experiment {
        c.experiment = match e {
            Experiment::Mnist => ExperimentKind::Mnist,
            Experiment::Fpu => ExperimentKind::Fpu,
            Experiment::Calcofi => ExperimentKind::Calcofi,
            Experiment::Generic => ExperimentKind::Generic,
        };
    }
    if let Some(k) = cli.kernel {
        c.kernel = Some(match k {
            Kernel::Gaussian => KernelFamily::Gaussian,
            Kernel::Polynomial => KernelFamily::Polynomial,
            Kernel::Composite => KernelFamily::Composite,
        });
    }
    if let Some(v) = cli.kappa {
        c.kappa = v;
    }
    if let Some(v) = cli.degree {
        c.degree = v;
    }
    if let Some(v) = cli.epsilon {
        c.epsilon = v;
    }
    if let Some(v) = cli.gamma {
        c.gamma = v;
    }
    if cli.train.is_some() {
        c.train = cli.train;
    }
    if cli.test.is_some() {
        c.test = cli.test;
    }
    if cli.data_dir.is_some() {
        c.data_dir = cli.data_dir;
    }
    if cli.subsample.is_some() {
        c.subsample = cli.subsample;
    }
    if cli.test_subsample.is_some() {
        c.test_subsample = cli.test_subsample;
    }
    if let Some(v) = cli.seed {
        c.seed = v;
    }
    if let Some(v) = cli.out {
        c.out = v;
    }
    if let Some(f) = cli.format {
        c.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    c.low_memory |= cli.low_memory;
    if let Some(n) = cli.nystrom {
        c.nystrom = match n {
            Nystrom::Off => NystromMode::Off,
            Nystrom::Uniform => NystromMode::Uniform,
            Nystrom::Leverage => NystromMode::Leverage,
        };
    }
    c.budget_match |= cli.budget_match;
    if cli.nystrom_budget.is_some() {
        c.nystrom_budget = cli.nystrom_budget;
    }
    if let Some(b) = cli.backend {
        c.backend = match b {
            Exec::Sequential => Backend::Sequential,
            Exec::Parallel => Backend::Parallel,
        };
    }
    if let Some(v) = cli.dims {
        c.fpu.dims = v;
    }
    if let Some(v) = cli.samples {
        c.fpu.samples = v;
    }
    if let Some(v) = cli.trials {
        c.fpu.trials = v;
    }
    if cli.no_full_fit {
        c.fpu.full_fit = false;
    }
    if let Some(v) = cli.inputs {
        c.table.inputs = v;
    }
    if let Some(v) = cli.outputs {
        c.table.outputs = v;
    }
    if cli.no_normalize {
        c.table.normalize = false;
    }
    Ok((c, cli.print_config))
}

fn run(cli: Cli) -> Result<()> {
    let (config, print_only) = merge(cli)?;
    if print_only {
        print!(
            "{}",
            toml::to_string(&config.resolved()).context("serializing configuration")?
        );
        return Ok(());
    }
    config.validate()?;
    let output = experiments::run(&config)?;
    let path = experiments::write_outputs(&config.out, &output, config.format)?;
    println!("{} rows written to {}", output.table.rows.len(), path.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_CONFIG;
    }
    match err.downcast_ref::<kfsa::Error>().map(kfsa::Error::kind) {
        Some(ErrorKind::Config) => EXIT_CONFIG,
        Some(ErrorKind::Numerical) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
