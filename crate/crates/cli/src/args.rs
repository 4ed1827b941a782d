use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ncsde", version, about = "Collective spectral density estimation and clustering")]
pub struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "NCSDE_THREADS")]
    pub threads: Option<usize>,
    /// JSON settings file; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Periodogram ordinates of every series, plus the frequency grid.
    Periodogram(PeriodogramArgs),
    /// Fit the collective model and write coefficients, densities and traces.
    Fit(FitArgs),
    /// Ward clustering of scores or fitted densities.
    Cluster(ClusterArgs),
    /// Monte Carlo study over (n, m) cells.
    Simulate(SimulateArgs),
    /// Run all six estimators and cluster each.
    Compare(CompareArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct PeriodogramArgs {
    /// CSV with one column per series and a header row.
    pub input: PathBuf,
    /// Keep only the lowest k frequencies.
    #[arg(long)]
    pub truncate: Option<usize>,
    /// Output CSV; the grid and metadata go next to it as `<stem>.grid.csv`
    /// and `<stem>.meta.json`.
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Basis and penalty flags shared by `fit` and `compare`.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Number of shared basis functions.
    #[arg(short = 'K', long = "K")]
    pub k: Option<usize>,
    /// Number of B-spline basis functions.
    #[arg(short = 'L', long = "L")]
    pub n_basis: Option<usize>,
    /// B-spline degree.
    #[arg(long)]
    pub degree: Option<usize>,
    /// `d2` or `diff:<order>`.
    #[arg(long)]
    pub penalty: Option<String>,
    /// `fixed:<x>`, `auto`, `auto:<x0>` or `grid:<x1>,<x2>,...`.
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub truncate: Option<usize>,
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    /// Rows are series, columns are score components (`a.csv`).
    Scores,
    /// Rows are frequencies, columns are series (`sdf.csv`); clustered on
    /// the log scale.
    Sdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KChoice {
    Auto,
    Fixed(usize),
}

impl FromStr for KChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(KChoice::Auto);
        }
        s.parse()
            .map(KChoice::Fixed)
            .map_err(|_| format!("expected `auto` or a positive integer, got `{s}`"))
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "scores")]
    pub input_kind: InputKind,
    /// Number of clusters, or `auto` for the elbow of the WSS curve.
    #[arg(long, default_value = "auto")]
    pub k: KChoice,
    /// Largest k on the WSS curve (capped at the number of series).
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub n: usize,
    pub m: usize,
}

impl FromStr for Cell {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (n, m) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("cell `{s}` is not of the form <n>x<m>"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("cell `{s}` is not of the form <n>x<m>"));
        Ok(Cell { n: parse(n)?, m: parse(m)? })
    }
}

/// Parses `100x6,400x30`.
pub fn parse_cells(s: &str) -> Result<Vec<Cell>, String> {
    s.split(',').map(Cell::from_str).collect()
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Comma-separated `<n>x<m>` cells; defaults to all nine standard cells.
    #[arg(long)]
    pub cells: Option<String>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rank for the low-rank estimators; defaults to the number of models.
    #[arg(short = 'K', long = "K")]
    pub k: Option<usize>,
    #[arg(short = 'L', long = "L")]
    pub n_basis: Option<usize>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
    /// Long-format report CSV; wide tables and metadata go next to it.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Clusters to cut for each estimator; defaults to K.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Fits that may run at once.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Fits that may wait for a worker.
    #[arg(long)]
    pub queue_capacity: Option<usize>,
    /// Browser origin allowed by CORS; any origin when unset.
    #[arg(long)]
    pub cors_origin: Option<String>,
}
