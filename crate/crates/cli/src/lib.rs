//! Command-line front end: reads a scenario file, runs one command and writes
//! CSV outputs plus a JSON report into an output directory.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod error;
pub mod output;
pub mod scenario;

pub use error::CliError;
pub use scenario::{parse_scenario, Scenario, ScenarioFile};

#[derive(Debug, Parser)]
#[command(
    name = "ecoplan",
    version,
    about = "Minimum-fuel speed planning for a single vehicle"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the value function on the grid and roll out the optimal policy.
    Solve(CommonArgs),
    /// Tune the four-phase power/hold/coast/brake baseline.
    Baseline(CommonArgs),
    /// Check a trajectory CSV against the maximum principle and the KKT conditions.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Trajectory CSV; overrides `verify.trajectory` in the scenario.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run the receding-horizon controller over the scenario's events.
    Simulate(CommonArgs),
    /// Compare the plan made once at t = 0 with the receding-horizon controller.
    Compare(CommonArgs),
    /// Exhaustive search over stage-wise constant controls.
    Oracle(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Grid nodes as NX,NV,NT.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<[usize; 3]>,
    /// Seconds between re-plans.
    #[arg(long)]
    pub update_interval: Option<f64>,
    /// Seed of the observation noise (needs a `noise` section in the scenario).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Oracle stage count.
    #[arg(long)]
    pub stages: Option<usize>,
}

fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [nx, nv, nt] = parts.as_slice() else {
        return Err(format!("expected NX,NV,NT, got `{s}`"));
    };
    let n = |p: &str| p.parse::<usize>().map_err(|e| format!("bad grid count `{p}`: {e}"));
    Ok([n(nx)?, n(nv)?, n(nt)?])
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            // --help and --version.
            err.print().map_err(|e| CliError::Internal(e.to_string()))?;
            return Ok(());
        }
        Err(err) => return Err(CliError::Argument(err.to_string())),
    };
    run(&cli.command)
}

pub fn run(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Solve(a) => commands::solve(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Verify { common, trajectory } => commands::verify(common, trajectory.as_deref()),
        Command::Simulate(a) => commands::simulate(a),
        Command::Compare(a) => commands::compare(a),
        Command::Oracle(a) => commands::oracle(a),
    }
}
