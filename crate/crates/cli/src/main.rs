mod commands;
mod config;
mod output;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::{EvalInputs, ReconInputs};
use crate::config::ExperimentConfig;

/// Energy-based prior training and MRI reconstruction experiments.
#[derive(Parser, Debug)]
#[command(name = "ebmrec", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flags that override values from the config file.
#[derive(Args, Debug)]
struct Overrides {
    /// TOML experiment config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Acceleration factor of the sampling mask.
    #[arg(long = "R", global = true)]
    r: Option<f64>,
    /// cartesian1d, pseudo_radial, random2d or poisson_disk.
    #[arg(long, global = true)]
    pattern: Option<String>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// uniform_noise or zero_filled.
    #[arg(long, global = true)]
    init: Option<String>,
    /// Number of noise levels.
    #[arg(long, global = true)]
    levels: Option<usize>,
    /// Langevin steps per noise level.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Base Langevin step of the annealing schedule.
    #[arg(long, global = true)]
    eps: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a phantom dataset with a manifest.
    Phantom {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Generate an undersampling mask.
    Mask,
    /// Train the energy prior.
    Train {
        /// Dataset manifest; generated in memory when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Reconstruct from undersampled k-space.
    Recon {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Ground-truth image; k-space is simulated from it unless given.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Measured k-space (CIMG).
        #[arg(long)]
        kspace: Option<PathBuf>,
        /// Mask file; generated from the config when absent.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Manifest whose test split is reconstructed in batch.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Compute PSNR and SSIM of results against references.
    Eval {
        result: Option<PathBuf>,
        reference: Option<PathBuf>,
        /// Directory holding recon_<id>.cimg files for batch mode.
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Mask used for the results, to fill the mask and R columns.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Draw unconditional samples from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        count: Option<usize>,
    },
}

fn effective_config(o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.out {
        cfg.output.dir = v.to_string_lossy().into_owned();
    }
    if let Some(v) = o.r {
        cfg.recon.acceleration = v;
    }
    if let Some(v) = &o.pattern {
        cfg.recon.pattern = v.clone();
    }
    if let Some(v) = o.lambda {
        cfg.recon.lambda = v;
    }
    if let Some(v) = &o.init {
        cfg.recon.init = v.clone();
    }
    if let Some(v) = o.levels {
        cfg.sample.levels = v;
    }
    if let Some(v) = o.steps {
        cfg.sample.steps = v;
    }
    if let Some(v) = o.eps {
        cfg.sample.eps = v;
    }
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("EBMREC_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("EBMREC_THREADS must be a number, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads()?;
    let mut cfg = effective_config(&cli.overrides)?;
    match &cli.command {
        Command::Phantom { count } => {
            if let Some(c) = count {
                cfg.data.count = *c;
            }
            commands::phantom(&cfg)
        }
        Command::Mask => commands::mask(&cfg),
        Command::Train { data, resume, iterations } => {
            if let Some(n) = iterations {
                cfg.train.iterations = *n;
            }
            commands::train(&cfg, data.as_deref(), resume.as_deref())
        }
        Command::Recon { checkpoint, reference, kspace, mask, data } => commands::recon(
            &cfg,
            &ReconInputs {
                checkpoint,
                reference: reference.as_deref(),
                kspace: kspace.as_deref(),
                mask: mask.as_deref(),
                manifest: data.as_deref(),
            },
        ),
        Command::Eval { result, reference, results, data, mask } => commands::eval(
            &cfg,
            &EvalInputs {
                result: result.as_deref(),
                reference: reference.as_deref(),
                results: results.as_deref(),
                manifest: data.as_deref(),
                mask: mask.as_deref(),
            },
        ),
        Command::Sample { checkpoint, count } => {
            if let Some(c) = count {
                cfg.sample.count = *c;
            }
            commands::sample(&cfg, checkpoint)
        }
    }
}
