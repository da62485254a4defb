use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "seqlearn",
    version,
    about = "Sequential sample sizes for least-squares regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Second-order overshoot constant eta(k)
    Eta(EtaArgs),
    /// Monte Carlo study of the procedure on a normal linear model
    Simulate(SimulateArgs),
    /// Run the procedure over CSV data
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EtaArgs {
    #[arg(long)]
    pub k: usize,
    /// Also report eta(k) / rho
    #[arg(long)]
    pub rho: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ProcedureArgs {
    /// Risk bound
    #[arg(long, default_value_t = 0.1)]
    pub b: f64,
    /// Observations per sequential step
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Fraction of the projected size sampled sequentially
    #[arg(long, default_value_t = 0.8)]
    pub rho: f64,
    /// Pilot multiplier; the pilot has m0*k + p rows
    #[arg(long, default_value_t = 2)]
    pub m0: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub procedure: ProcedureArgs,
    /// Number of replications
    #[arg(long = "R", visible_alias = "replications", default_value_t = 10_000)]
    pub replications: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Error standard deviation
    #[arg(long, default_value_t = 2.0)]
    pub error_sd: f64,
    /// True coefficients, intercept first
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub beta: Option<Vec<f64>>,
    /// Predictor distribution as MEAN:VARIANCE, once per predictor
    #[arg(long = "predictor", value_parser = parse_predictor)]
    pub predictors: Vec<(f64, f64)>,
    /// Worker threads (0 = all cores); results do not depend on it
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// CSV file; repeat to interleave several files row by row
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub response: String,
    #[arg(long, value_delimiter = ',')]
    pub predictors: Vec<String>,
    /// Columns to transform with ln(v + 1)
    #[arg(long, value_delimiter = ',')]
    pub log: Vec<String>,
    /// 0/1 indicator columns
    #[arg(long, value_delimiter = ',')]
    pub dummies: Vec<String>,
    #[arg(long)]
    pub no_intercept: bool,
    #[command(flatten)]
    pub procedure: ProcedureArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_predictor(s: &str) -> Result<(f64, f64), String> {
    let (mean, var) = s
        .split_once(':')
        .ok_or_else(|| format!("expected MEAN:VARIANCE, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok((num(mean)?, num(var)?))
}
