//! `thermnet` command-line front end.

mod commands;
mod manifest;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "thermnet", version, about = "Lumped-parameter thermal network analysis")]
pub struct Cli {
    /// Model file (JSON).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Master seed of the radiative Monte Carlo.
    #[arg(long, global = true, default_value_t = thermnet::radiative::DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "THERMNET_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Compute radiative exchange factors by Monte Carlo ray tracing.
    Radk(RadkArgs),
    /// Solve the steady-state energy balance.
    SolveSteady(SteadyArgs),
    /// Integrate the network in time.
    SolveTransient(TransientArgs),
    /// Frequency response of the linearized network.
    Transfer(TransferArgs),
    /// Steady heat-flow report as CSV and a DOT graph.
    Heatflow(HeatflowArgs),
    /// Orbit scenarios: cool-down at L2 or quasi-stationary cycling in a
    /// highly elliptical Earth orbit.
    Orbit(OrbitArgs),
    /// Run a command once per value of a model parameter.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RadkArgs {
    /// Rays per face (overrides the default budget).
    #[arg(long)]
    pub rays: Option<u64>,
    /// Rays per high-accuracy face.
    #[arg(long)]
    pub rays_high: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyMethod {
    Newton,
    Iterative,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SteadyArgs {
    #[arg(long, value_enum, default_value = "newton")]
    pub method: SteadyMethod,
    /// Residual tolerance, W.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum TransientMethod {
    Cn,
    Bdf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TransientArgs {
    #[arg(long, value_enum, default_value = "bdf")]
    pub method: TransientMethod,
    #[arg(long, default_value_t = 0.0)]
    pub t_start: f64,
    /// End time, s.
    #[arg(long)]
    pub t_end: f64,
    /// Initial step, s.
    #[arg(long, default_value_t = 1.0)]
    pub dt0: f64,
    #[arg(long)]
    pub dt_max: Option<f64>,
    /// Output interval, s (default: every accepted step).
    #[arg(long)]
    pub output_every: Option<f64>,
    /// Absolute local error tolerance, K.
    #[arg(long, default_value_t = 1e-4)]
    pub atol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    /// Stop once every |dT/dt| is below this rate, K/s.
    #[arg(long)]
    pub steady_rate: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TransferArgs {
    /// `boundary:<node>` or `power:<node>`.
    #[arg(long)]
    pub input: String,
    #[arg(long, default_value_t = thermnet::linear::DEFAULT_FMIN)]
    pub fmin: f64,
    #[arg(long, default_value_t = thermnet::linear::DEFAULT_FMAX)]
    pub fmax: f64,
    #[arg(long, default_value_t = thermnet::linear::DEFAULT_POINTS)]
    pub points: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HeatflowArgs {}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    L2,
    Heo,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OrbitArgs {
    #[arg(long, value_enum, default_value = "heo")]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 10)]
    pub cycles_max: usize,
    /// Periodicity tolerance at the reference position, K.
    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,
    #[arg(long, value_enum, default_value = "bdf")]
    pub method: TransientMethod,
    /// Output samples per orbit at equal true-anomaly steps, 0 for every
    /// accepted step (heo).
    #[arg(long, default_value_t = 720)]
    pub samples: usize,
    /// Starting temperature of all non-boundary nodes, K (l2).
    #[arg(long, default_value_t = 293.15)]
    pub start_temperature: f64,
    /// Longest cool-down simulated, days (l2).
    #[arg(long, default_value_t = 400.0)]
    pub max_days: f64,
    /// Steady criterion on |dT/dt|, K/s (l2).
    #[arg(long, default_value_t = 1e-8)]
    pub steady_rate: f64,
    /// A node counts as settled once within this band of its final value, K.
    #[arg(long, default_value_t = 1.0)]
    pub settle_band: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Model field, e.g. `loads[heater].power` or `nodes[spacecraft].temperature`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    /// Node temperatures reported in the summary (default: all).
    #[arg(long, value_delimiter = ',')]
    pub report: Vec<String>,
    /// Inner command and its flags, after `--`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, required = true)]
    pub inner: Vec<String>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Solver(anyhow::Error),
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Failure {
        Failure::Usage(e.into())
    }
    pub fn solver(e: impl Into<anyhow::Error>) -> Failure {
        Failure::Solver(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver failure: {e:#}");
            ExitCode::from(1)
        }
    }
}
