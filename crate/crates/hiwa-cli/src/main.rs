//! `hiwa` — hierarchical Wasserstein alignment of clustered point clouds.
//!
//! Subcommands:
//! - `generate`  — synthesize a clustered dataset pair with known truth
//! - `align`     — run the alignment solver on two CSV datasets
//! - `benchmark` — serial-vs-parallel wall-time comparison
//! - `sweep`     — batch experiments with percentile summaries
//!
//! Exit codes: 0 success (including flagged non-convergence), 2 usage or
//! input error, 1 internal error.

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "hiwa", version, about = "Hierarchical Wasserstein alignment of clustered point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clustered dataset pair with ground truth.
    Generate(GenerateArgs),
    /// Align two clustered datasets and emit a JSON result.
    Align(AlignArgs),
    /// Time alignment runs across cluster counts and thread counts.
    Benchmark(BenchmarkArgs),
    /// Run a named experiment over many seeds and summarize errors.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SubspaceModeArg {
    #[value(name = "random")]
    Random,
    #[value(name = "equally_spaced")]
    EquallySpaced,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Hierarchical alignment over the given clusters.
    Hiwa,
    /// Flat baseline: all points pooled into one cluster.
    Wa,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentArg {
    #[value(name = "worst_vs_random")]
    WorstVsRandom,
    #[value(name = "dim_sample_sweep")]
    DimSampleSweep,
    #[value(name = "ablation")]
    Ablation,
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of clusters S.
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    /// Intrinsic cluster dimension d.
    #[arg(long, default_value_t = 2)]
    intrinsic_dim: usize,
    /// Embedding dimension D.
    #[arg(long, default_value_t = 6)]
    ambient_dim: usize,
    /// Points per cluster n.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, value_enum, default_value = "random")]
    subspace_mode: SubspaceModeArg,
    /// Ambient Gaussian noise standard deviation on the second dataset.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Shuffle cluster identities of the second dataset.
    #[arg(long)]
    permute: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the first dataset (CSV).
    #[arg(long)]
    out_x: std::path::PathBuf,
    /// Output path for the second dataset (CSV).
    #[arg(long)]
    out_y: std::path::PathBuf,
    /// Output path for the ground truth (JSON).
    #[arg(long)]
    out_truth: std::path::PathBuf,
}

#[derive(Args)]
struct AlignArgs {
    /// First dataset (CSV).
    x_file: std::path::PathBuf,
    /// Second dataset (CSV).
    y_file: std::path::PathBuf,
    /// Ground-truth JSON; enables the error metrics in the result.
    #[arg(long)]
    truth: Option<std::path::PathBuf>,
    /// Write the JSON result here instead of standard output.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Entropic weight of the cluster correspondence (default: 0.1 × median initial cost).
    #[arg(long)]
    gamma1: Option<f64>,
    /// Entropic weight of the point couplings (default: 0.05 × median initial cost).
    #[arg(long)]
    gamma2: Option<f64>,
    /// ADMM consensus strength.
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    #[arg(long, default_value_t = 300)]
    outer_iters: usize,
    /// Convergence tolerance on the consensus transform.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 30)]
    inner_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    inner_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for the pair subproblems (0 = all cores).
    #[arg(long, env = "HIWA_THREADS", default_value_t = 0)]
    threads: usize,
    #[arg(long, value_enum, default_value = "hiwa")]
    mode: ModeArg,
    /// Compute the disambiguity and perturbation reports (needs --truth
    /// for intrinsic dimensions).
    #[arg(long)]
    diagnostics: bool,
    /// Confidence parameter for the disambiguity criterion.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Seeded restarts per cluster pair when estimating best pair costs.
    #[arg(long, default_value_t = 5)]
    restarts: usize,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Cluster counts to benchmark.
    #[arg(long, value_delimiter = ',', default_value = "2,5,10")]
    clusters_list: Vec<usize>,
    /// Thread counts to benchmark.
    #[arg(long, value_delimiter = ',', default_value = "1,4")]
    threads_list: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Points per cluster.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 2)]
    intrinsic_dim: usize,
    #[arg(long, default_value_t = 6)]
    ambient_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed outer iteration count per run (keeps timed work identical
    /// across thread counts).
    #[arg(long, default_value_t = 20)]
    outer_iters: usize,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(value_enum)]
    experiment: ExperimentArg,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    /// Intrinsic dimensions (dim_sample_sweep grid).
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    dims_list: Vec<usize>,
    /// Embedding dimension per entry of --dims-list (default: d + 4).
    #[arg(long, value_delimiter = ',')]
    ambient_dims_list: Option<Vec<usize>>,
    /// Points per cluster (worst_vs_random and dim_sample_sweep grids).
    #[arg(long, value_delimiter = ',')]
    samples_list: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "HIWA_THREADS", default_value_t = 0)]
    threads: usize,
    /// Write per-trial rows here instead of standard output.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Write the percentile summary here instead of standard error.
    #[arg(long)]
    summary_out: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Align(args) => commands::align(args),
        Command::Benchmark(args) => commands::benchmark(args),
        Command::Sweep(args) => commands::sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for anything the user can fix, 1 for internal failures.
fn exit_code(err: &hiwa::Error) -> u8 {
    match err {
        hiwa::Error::Numerical(_) => 1,
        _ => 2,
    }
}
