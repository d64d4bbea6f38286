//! `cmps`: embed constraint systems as MPS, count solutions, scan charge
//! complexity and run the annealed optimizer.

mod commands;
mod errors;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "cmps", version, about = "Constrained matrix product states for binary constraint problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the link indices and MPS for an instance and report their sizes.
    Embed(EmbedArgs),
    /// Count feasible bitstrings by contracting the MPS.
    Count(CountArgs),
    /// Charge complexity sweeps over generated families, as CSV.
    Complexity(ComplexityArgs),
    /// Minimize an instance's quadratic cost over its feasible set.
    Solve(SolveArgs),
    /// Repeated solver runs on generated QKP instances, as CSV.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Cardinality,
    Qkp,
    Facility,
}

/// Where the instance comes from: a file or a generator.
#[derive(Args, Debug, Clone)]
pub struct InstanceArgs {
    /// JSON instance file.
    #[arg(long, conflicts_with = "family")]
    pub instance: Option<PathBuf>,
    /// Generated family.
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Number of variables.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of constraints (facility).
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Lower bound (cardinality; defaults to N/2).
    #[arg(long)]
    pub lower: Option<i64>,
    /// Upper bound (cardinality defaults to N/2, facility to 2).
    #[arg(long)]
    pub upper: Option<i64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub source: InstanceArgs,
    /// Flux site, 1-based (default: last site).
    #[arg(long)]
    pub flux: Option<usize>,
    /// Write the per-link table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the constructed MPS in text form.
    #[arg(long)]
    pub mps: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    #[command(flatten)]
    pub source: InstanceArgs,
    /// Cross-check against exhaustive enumeration.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Args, Debug)]
pub struct ComplexityArgs {
    #[arg(long, value_enum, default_value = "cardinality")]
    pub family: Family,
    /// Problem sizes N.
    #[arg(long, value_delimiter = ',', default_value = "12,24,36,48,60")]
    pub sizes: Vec<usize>,
    /// Ranges u - l for cardinality (default: 0..=N).
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<i64>>,
    /// Constraint counts for facility.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub ms: Vec<usize>,
    /// Upper bounds for facility.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub uppers: Vec<i64>,
    /// Random matrices per facility tuple.
    #[arg(long, default_value_t = 5)]
    pub repeats: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Iterations.
    #[arg(long, default_value_t = 75)]
    pub iters: usize,
    /// Truncation cutoff on the discarded weight.
    #[arg(long, default_value_t = 1e-4)]
    pub cutoff: f64,
    /// Learning rate.
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// Samples per batch and training set size.
    #[arg(long, default_value_t = 400)]
    pub samples: usize,
    /// Initial temperature: a number or `auto` (default: 2.5 N for QKP, auto otherwise).
    #[arg(long)]
    pub tinit: Option<String>,
    /// Training samples replaced on reset (default: samples / 10).
    #[arg(long)]
    pub replace: Option<usize>,
    /// Bond dimension cap.
    #[arg(long)]
    pub max_bond: Option<usize>,
    /// Soft wall-clock limit in seconds, checked between iterations.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Record wall times; outputs are then no longer reproducible byte for byte.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: InstanceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// History CSV path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// QKP sizes N.
    #[arg(long, value_delimiter = ',', default_value = "20")]
    pub sizes: Vec<usize>,
    /// Runs per size; run k uses seed + k for both instance and solver.
    #[arg(long, default_value_t = 10)]
    pub runs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// CSV path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Embed(a) => commands::embed(&a),
        Command::Count(a) => commands::count(&a),
        Command::Complexity(a) => commands::complexity(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Bench(a) => commands::bench(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(errors::exit_code(&err))
        }
    }
}
