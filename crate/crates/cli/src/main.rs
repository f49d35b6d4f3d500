//! `cbc-lista`: build, compress, simulate, solve, train, ablate, evaluate
//! and report.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "cbc-lista", version, about = "Slice-wise convolutional operators and unrolled sparse recovery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the analytic forward model from a config file.
    Build {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Factorize every slice of a model into basis and mixing filters.
    Compress {
        #[arg(long)]
        model: PathBuf,
        /// omp, svd or random
        #[arg(long, default_value = "omp")]
        method: String,
        /// Random scheme: xavier, kaiming or orthogonal.
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long, default_value_t = 32)]
        basis: usize,
        /// OMP stopping tolerance relative to each slice's Frobenius norm.
        #[arg(long, default_value_t = cbc_core::compress::DEFAULT_RELATIVE_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize one (reflectivity, data) pair with the model.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// `noiseless` or an SNR in dB.
        #[arg(long, default_value = "noiseless")]
        snr: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Scatterer recipe from `[train.data]`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a data cube with ISTA.
    Solve {
        /// Model or compressed-model artifact.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "ista")]
        algo: String,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        /// Defaults to 0.1·‖Aᵀy‖∞.
        #[arg(long)]
        lambda: Option<f64>,
        /// Stop when the relative objective change falls below this.
        #[arg(long, default_value_t = 0.0)]
        stop_tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an unrolled network.
    Train {
        #[arg(long)]
        model: PathBuf,
        /// Compressed model for cbc; compressed on the fly from `[compress]` otherwise.
        #[arg(long)]
        compressed: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        blocks: Option<usize>,
        /// analytic, xavier, kaiming or orthogonal
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        snr: Option<String>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every cell of an ablation matrix.
    Ablate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmark networks and ISTA baselines on frozen evaluation sets.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "network")]
        networks: Vec<PathBuf>,
        /// ISTA iteration counts to include as baselines.
        #[arg(long = "ista", value_delimiter = ',')]
        ista: Vec<usize>,
        /// Include the ground-truth fixture.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        set_size: Option<usize>,
        /// Comma-separated conditions, e.g. `noiseless,20,5`.
        #[arg(long)]
        conditions: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        precision: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge metrics tables and collect loss curves.
    Report {
        #[arg(long = "record")]
        records: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Write to this directory instead of the recorded one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command, &argv[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
