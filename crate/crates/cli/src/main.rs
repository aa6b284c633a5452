//! `dpnv`: simulate data, fit private newsvendor policies, evaluate them,
//! inspect privacy budgets and run replication benchmarks.
//!
//! Exit codes: 0 success, 2 usage or invalid parameters, 3 I/O, 4 privacy
//! (a requested certificate cannot be issued).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpnv_core::config::{StepSchedule, Tunable};
use dpnv_core::optimizer::UpdateMode;
use dpnv_core::Kernel;

#[derive(Parser, Debug)]
#[command(name = "dpnv", version, about = "Differentially private feature-based newsvendor")]
struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic dataset (demand plus 4 features) to CSV.
    Simulate(SimulateArgs),
    /// Fit a policy on a CSV dataset and write it as JSON.
    Fit(FitArgs),
    /// Score a fitted policy on a CSV dataset.
    Evaluate(EvaluateArgs),
    /// Print the noise scale and (epsilon, delta) for a privacy budget.
    Privacy(PrivacyArgs),
    /// Run a replication study from a TOML config.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DistArg {
    Normal,
    T3,
    Mixture,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "normal")]
    dist: DistArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Cost structure: `--b/--h`, or `--tau` for the quantile form.
#[derive(Args, Debug, Clone)]
struct CostArgs {
    /// Per-unit underage (lost sales) cost.
    #[arg(long, requires = "h", conflicts_with = "tau")]
    b: Option<f64>,
    /// Per-unit overage (holding) cost.
    #[arg(long, requires = "b")]
    h: Option<f64>,
    /// Target quantile; sets b = tau, h = 1 - tau.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KernelArg {
    Gaussian,
    Laplacian,
    Logistic,
    Uniform,
    Epanechnikov,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Gaussian => Kernel::Gaussian,
            KernelArg::Laplacian => Kernel::Laplacian,
            KernelArg::Logistic => Kernel::Logistic,
            KernelArg::Uniform => Kernel::Uniform,
            KernelArg::Epanechnikov => Kernel::Epanechnikov,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Raw,
    KnownCovariance,
}

impl From<ModeArg> for UpdateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Raw => UpdateMode::Raw,
            ModeArg::KnownCovariance => UpdateMode::KnownCovariance,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScheduleArg {
    Frozen,
    Backtracking,
}

impl From<ScheduleArg> for StepSchedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Frozen => StepSchedule::Frozen,
            ScheduleArg::Backtracking => StepSchedule::Backtracking,
        }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    cost: CostArgs,
    #[arg(long, default_value = "demand")]
    demand_column: String,
    /// GDP level; required unless --nonprivate.
    #[arg(long, required_unless_present = "nonprivate")]
    mu: Option<f64>,
    /// Number of noisy iterations.
    #[arg(long = "T", default_value_t = 10)]
    iterations: usize,
    /// Clip radius.
    #[arg(long = "B", default_value_t = 2.0)]
    clip: f64,
    /// Noise scale; defaults to the smallest integer that certifies --mu.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum, default_value = "gaussian")]
    kernel: KernelArg,
    /// Bandwidth, or `auto`.
    #[arg(long, default_value = "auto")]
    bandwidth: Tunable,
    /// Step size, or `auto` (line search).
    #[arg(long, default_value = "auto")]
    eta0: Tunable,
    #[arg(long, value_enum, default_value = "frozen")]
    step_schedule: ScheduleArg,
    #[arg(long, value_enum, default_value = "raw")]
    mode: ModeArg,
    /// Start from a random point on the unit sphere instead of zero.
    #[arg(long)]
    sphere_init: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fit the non-private smoothed ERM instead; no certificate.
    #[arg(long, conflicts_with_all = ["mu", "sigma"])]
    nonprivate: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// JSON written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    cost: CostArgs,
    #[arg(long, default_value = "demand")]
    demand_column: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PrivacyArgs {
    #[arg(long)]
    mu: f64,
    #[arg(long = "T", default_value_t = 10)]
    iterations: usize,
    #[arg(long = "B", default_value_t = 2.0)]
    clip: f64,
    #[command(flatten)]
    cost: CostArgs,
    /// Check this noise scale instead of calibrating one.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// TOML experiment config.
    config: PathBuf,
    /// Override `run.reps`.
    #[arg(long)]
    reps: Option<usize>,
    /// Override `data.ns` with a single sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Override `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); overrides `run.jobs`.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override `data.eval_size`.
    #[arg(long)]
    eval_size: Option<usize>,
    /// Long-format rows CSV; overrides `run.rows`.
    #[arg(long)]
    rows: Option<PathBuf>,
    /// Aggregated table CSV; overrides `run.aggregates`.
    #[arg(long)]
    aggregates: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).init();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Privacy(a) => commands::privacy(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
