use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "odesens", version, about = "Sensitivity benchmarks and verification for ODE models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sensitivity trajectories for one model and method, timed.
    Sens(SensArgs),
    /// Brusselator gradient timings over a range of grid sizes.
    Scale(ScaleArgs),
    /// Fit a model to data generated from its reference parameters.
    Estimate(EstimateArgs),
    /// Cross-method agreement checks with a JSON report.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Output {
    /// Where the record is written. Defaults to `<command>.<format>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Seed for the randomised checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Output {
    pub fn path(&self, command: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(format!("{command}.{}", self.format.extension())))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SensArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub method: String,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Brusselator grid size.
    #[arg(long = "bruss-n", default_value_t = 3)]
    pub bruss_n: usize,
    /// Timed repetitions after one warmup.
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct ScaleArgs {
    #[arg(long, default_value = "bruss")]
    pub model: String,
    #[arg(long = "n-list", value_delimiter = ',', default_value = "3,4,5,6,7")]
    pub n_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "dsaad,casa-user")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub method: String,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long = "bruss-n", default_value_t = 3)]
    pub bruss_n: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// BFGS iteration limit.
    #[arg(long = "max-iters", default_value_t = 500)]
    pub max_iters: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Scales the CSA user Jacobian by 1.01 to exercise the failure path.
    #[arg(long = "inject-fault")]
    pub inject_fault: bool,
    #[command(flatten)]
    pub output: Output,
}
