use anyhow::Result;
use clap::{Parser, Subcommand};
use deco_mamba_cli::commands::{
    cmd_bench, cmd_describe, cmd_eval, cmd_gradcheck, cmd_predict, cmd_synth, cmd_train, SynthArgs,
};
use std::path::PathBuf;

/// Segmentation network with co-attention gating, 2-D selective scans and
/// deformable refinement, plus windowed-distribution deep supervision.
#[derive(Parser)]
#[command(name = "dm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a JSON config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "val")]
        split: String,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full gradient-check suite; nonzero exit on any failure.
    Gradcheck,
    /// Scan timings, preset parameter/MAC counts and a forward-pass timing.
    Bench,
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 250)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 96)]
        height: usize,
        #[arg(long, default_value_t = 96)]
        width: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 1)]
        channels: usize,
        #[arg(long, default_value_t = 0.03)]
        noise: f64,
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
    },
    /// Predict a mask for one PGM/PPM image.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also dump per-class probabilities (DMPB binary).
        #[arg(long)]
        probs: Option<PathBuf>,
        /// Bilinearly rescale images that do not match the model size
        /// instead of rejecting them.
        #[arg(long, default_value_t = false)]
        resize: bool,
    },
    /// Print the architecture (parameter table, counts) for a config.
    Describe {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> Result<()> {
    deco_mamba_cli::init_thread_pool();
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config } => cmd_train(&config),
        Command::Eval { ckpt, data, split, batch, out } => {
            cmd_eval(&ckpt, &data, &split, batch, out.as_deref())
        }
        Command::Gradcheck => cmd_gradcheck(),
        Command::Bench => cmd_bench(),
        Command::Synth {
            out,
            count,
            seed,
            height,
            width,
            classes,
            channels,
            noise,
            val_fraction,
        } => cmd_synth(&SynthArgs {
            out,
            count,
            seed,
            height,
            width,
            classes,
            channels,
            noise,
            val_fraction,
        }),
        Command::Predict { ckpt, image, out, probs, resize } => {
            cmd_predict(&ckpt, &image, &out, probs.as_deref(), resize)
        }
        Command::Describe { config } => cmd_describe(&config),
    }
}
