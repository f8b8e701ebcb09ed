//! Command line driver for the sensor placement pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
//! breakdown.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfsp_core::Error;

#[derive(Parser)]
#[command(name = "mfsp", version, about = "Budget-constrained multifidelity sensor placement")]
pub struct Cli {
    /// Bound internal parallelism (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Optional key=value config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed; all randomness derives from it through named
    /// sub-streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Args)]
pub struct FidelityParams {
    /// Cost of one cheap sensor.
    #[arg(long)]
    pub cost_cheap: Option<f64>,
    /// Cost of one expensive sensor.
    #[arg(long)]
    pub cost_exp: Option<f64>,
    /// Noise standard deviation of cheap sensors.
    #[arg(long)]
    pub sigma_cheap: Option<f64>,
    /// Noise standard deviation of expensive sensors.
    #[arg(long)]
    pub sigma_exp: Option<f64>,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Build a reduced model from snapshot data and persist it.
    Basis {
        /// Snapshot matrix, one row per location, one column per snapshot.
        #[arg(long)]
        data: PathBuf,
        /// Input format (csv or mfsm); inferred from the extension when
        /// omitted.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Cumulative energy fraction retained by the basis.
        #[arg(long)]
        energy: Option<f64>,
        /// Energy accounting: squared singular values or plain.
        #[arg(long, default_value = "squared")]
        energy_rule: String,
        /// Fraction of leading snapshots used for training.
        #[arg(long)]
        train_frac: Option<f64>,
        #[arg(long)]
        center: Option<bool>,
        /// Hard cap on the number of modes.
        #[arg(long)]
        max_modes: Option<usize>,
        /// Single-column 0/1 matrix marking candidate locations.
        #[arg(long)]
        candidate_mask: Option<PathBuf>,
        /// Directory the model is written into.
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Run a selection algorithm and write the design file.
    Design {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        fidelity: FidelityParams,
        #[arg(long)]
        budget: Option<f64>,
        /// greedy, greedy-naive, iterative or random.
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Cheap sensor count (random algorithm only).
        #[arg(long)]
        k_cheap: Option<usize>,
        /// Expensive sensor count (random algorithm only).
        #[arg(long)]
        k_exp: Option<usize>,
        /// Record the per-step greedy trace in the design file.
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct one snapshot from simulated measurements at a design.
    Reconstruct {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        design: PathBuf,
        /// Truth snapshots; the chosen column is measured and estimated.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        format: Option<String>,
        /// Snapshot column to reconstruct.
        #[arg(long, default_value_t = 0)]
        snapshot: usize,
        #[command(flatten)]
        fidelity: FidelityParams,
        /// Measure exactly instead of adding sensor noise.
        #[arg(long)]
        noise_free: bool,
        /// Estimate written as a single-column matrix (format by
        /// extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a design by reconstruction error over held-out snapshots.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        train_frac: Option<f64>,
        #[command(flatten)]
        fidelity: FidelityParams,
        #[arg(long)]
        noise_free: bool,
        /// Per-snapshot relative errors as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print feasible-allocation counts: feasible, kept, bound.
    Prune {
        #[arg(long)]
        cost_cheap: Option<f64>,
        #[arg(long)]
        cost_exp: Option<f64>,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Compare design files against each other and random baselines.
    Compare {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        designs: Vec<PathBuf>,
        #[command(flatten)]
        fidelity: FidelityParams,
        /// Random designs drawn per feasible allocation.
        #[arg(long)]
        samples: Option<usize>,
        /// Fill the mean_rel_err column by evaluating on this data.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        train_frac: Option<f64>,
        /// Comparison table CSV (stdout when omitted).
        #[arg(long)]
        out_table: Option<PathBuf>,
        /// Histogram CSV of random-baseline objective values.
        #[arg(long)]
        out_hist: Option<PathBuf>,
    },
    /// Exhaustive search (small candidate sets only) written as a design.
    Oracle {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        fidelity: FidelityParams,
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Some(n) = cli.threads {
        // a second initialization in-process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidInput(_) => 1,
                Error::NumericalBreakdown(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
