mod commands;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

/// Second-order Markov multistate models on daily trajectory data.
#[derive(Debug, Parser)]
#[command(name = "secord", version, about)]
struct Cli {
    /// Worker threads for simulation and bootstrap (outputs do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a cohort from a known chain.
    Simulate(SimulateArgs),
    /// Estimate the second-order transition tensor.
    Estimate(EstimateArgs),
    /// n-step prediction curve from a stored tensor.
    Predict(PredictArgs),
    /// Wild-bootstrap log-rank test of the first-order assumption.
    MarkovTest(MarkovTestArgs),
    /// Two-step path summary of the jump chain.
    Paths(PathsArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Trajectory CSV (`subject_id,day,state`).
    #[arg(long)]
    pub data: String,
    /// State-space JSON.
    #[arg(long)]
    pub space: String,
    /// Labels CSV (`index,label`) overriding the space file's labels.
    #[arg(long)]
    pub labels: Option<String>,
    /// Fail on any trajectory violation instead of dropping flagged subjects.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: String,
    #[arg(long)]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long, default_value = "ratio")]
    pub method: String,
    /// Pairs with fewer at-risk observations are reported as thin.
    #[arg(long, default_value_t = 10)]
    pub min_support: u64,
    #[arg(long)]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub tensor: String,
    /// Conditioning pair `h,j` (indices 1..M or labels).
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long)]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct MarkovTestArgs {
    #[command(flatten)]
    pub input: DataArgs,
    /// Transition `l,m`; repeat for several.
    #[arg(long, required = true)]
    pub transition: Vec<String>,
    /// `t0,tmax,step`.
    #[arg(long, default_value = "1,11,0.5")]
    pub grid: String,
    #[arg(long = "B", default_value_t = 5000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Conditioning states `j1,j2,...`; defaults to every transient state that can reach `l`.
    #[arg(long)]
    pub conditioning: Option<String>,
    /// occupancy | uniform
    #[arg(long, default_value = "occupancy")]
    pub weighting: String,
    #[arg(long)]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long)]
    pub out: String,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::MarkovTest(a) => commands::markov_test(&a),
        Command::Paths(a) => commands::paths(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("secord: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
