//! Command-line front end for the VAE laboratory.
//!
//! Subcommands: `train`, `eval`, `grid`, `latent-map`, `checks`,
//! `reproduce-tables`. Every run writes its artifacts plus a
//! `manifest.json` holding the fully resolved configuration; re-running
//! with `--config manifest.json` reproduces the artifacts byte for byte.
//!
//! Exit codes: 0 success, 2 usage error, 3 bad configuration, 4 bad or
//! missing checkpoint, 5 numeric/runtime failure (including failed checks),
//! 6 I/O failure. On failure a machine-readable record
//! `{"error": KIND, "message": ...}` is printed to stderr.

pub mod commands;
pub mod error;
pub mod heatmap;
pub mod manifest;
pub mod table;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser)]
#[command(name = "vaelab", version, about = "VAE laboratory on toy 2D densities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// Output directory (default: $VAELAB_OUT or ./runs/<run-name>)
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// JSON config file; explicit flags override its values. A manifest
    /// written by a previous run is accepted and replayed.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct TrainFlags {
    /// eight_gaussians | checkerboard | two_spirals
    #[arg(long)]
    pub dataset: Option<String>,
    /// elbo | iwae[:K] | mse
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Comma-separated hidden widths, e.g. 64,64
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// softplus | tanh
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub enc_logvar_bias: Option<f64>,
    #[arg(long)]
    pub dec_logvar_bias: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus its loss history.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Evaluate a checkpoint: single-sample -ELBO and importance NLL.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        n_eval: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimated and ground-truth density grids (CSV + PPM heatmaps).
    Grid {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Colored input/latent correspondence scatters (PPM).
    LatentMap {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Numerical identity checks (channel capacity, flow limit, quantized
    /// cost); exit 5 if any case fails.
    Checks {
        #[command(flatten)]
        common: CommonArgs,
        /// Run every suite (the default).
        #[arg(long)]
        all: bool,
        /// Also run the slow MSE-pitfall training comparison.
        #[arg(long)]
        pitfall: bool,
        #[arg(long)]
        pitfall_iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and evaluate all six models (ELBO + IWAE on each dataset) and
    /// write the results tables plus density/latent figures.
    ReproduceTables {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long)]
        iwae_iters: Option<usize>,
        #[arg(long)]
        k_train: Option<usize>,
        #[arg(long)]
        n_eval: Option<usize>,
        #[arg(long)]
        k_eval: Option<usize>,
        #[arg(long)]
        grid_resolution: Option<usize>,
        #[arg(long)]
        grid_k: Option<usize>,
        #[arg(long)]
        map_points: Option<usize>,
    },
}

/// Parses `argv` and executes the chosen subcommand, returning the process
/// exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message; keep its exit code convention
            // (0 for --help/--version, 2 for usage errors).
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result: Result<(), CliError> = match cli.command {
        Command::Train { common, flags } => commands::run_train(&common, &flags),
        Command::Eval {
            common,
            checkpoint,
            dataset,
            n_eval,
            k,
            seed,
        } => commands::run_eval(&common, checkpoint, dataset, n_eval, k, seed),
        Command::Grid {
            common,
            checkpoint,
            dataset,
            resolution,
            k,
            seed,
        } => commands::run_grid(&common, checkpoint, dataset, resolution, k, seed),
        Command::LatentMap {
            common,
            checkpoint,
            dataset,
            points,
            seed,
        } => commands::run_latent_map(&common, checkpoint, dataset, points, seed),
        Command::Checks {
            common,
            all: _,
            pitfall,
            pitfall_iters,
            seed,
        } => commands::run_checks(&common, pitfall, pitfall_iters, seed),
        Command::ReproduceTables {
            common,
            flags,
            iwae_iters,
            k_train,
            n_eval,
            k_eval,
            grid_resolution,
            grid_k,
            map_points,
        } => commands::run_reproduce_tables(
            &common,
            &flags,
            iwae_iters,
            k_train,
            n_eval,
            k_eval,
            grid_resolution,
            grid_k,
            map_points,
        ),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.record());
            e.kind.exit_code()
        }
    }
}
