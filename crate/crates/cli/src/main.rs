//! `sewgpt`: encode, train on, generate and draw sewing patterns.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sewgpt", version, about = "Sewing patterns as token sequences: codec, training, generation")]
pub struct Cli {
    /// JSON config file; falls back to $SEWCODEC_CONFIG, then to built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a pattern file against the structural rules.
    Validate { pattern: PathBuf },
    /// Fit normalization statistics on a directory of patterns.
    FitStats {
        dir: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Pattern JSON to a token file.
    Encode {
        pattern: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Token file (first sequence) to pattern JSON.
    Decode {
        tokens: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Encode, decode and report the largest reconstruction error per channel.
    Roundtrip {
        pattern: PathBuf,
        #[arg(long)]
        stats: PathBuf,
    },
    /// Generate a synthetic dataset with a manifest.
    Synth {
        /// Template name, or `all`.
        #[arg(long, default_value = "all")]
        template: String,
        /// Patterns per template.
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train a model on a dataset directory and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reuse these statistics instead of fitting them on the training split.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Sample a pattern for a caption.
    Generate {
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Continue a partial pattern.
    Complete {
        #[command(flatten)]
        gen: GenArgs,
        /// Partial pattern made of whole panels.
        #[arg(long, conflicts_with = "tokens", required_unless_present = "tokens")]
        prefix: Option<PathBuf>,
        /// Token file whose first sequence is the prefix.
        #[arg(long)]
        tokens: Option<PathBuf>,
    },
    /// Compare backprop against finite differences on a small model.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        coords: usize,
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Draw a pattern as SVG.
    RenderSvg {
        pattern: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Caption; empty means unconditional.
    #[arg(long, default_value = "")]
    pub prompt: String,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Also write the sampled token sequence here.
    #[arg(long)]
    pub tokens_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::run(cli);
    if let Err(e) = &result {
        eprintln!("error: {e:#}");
    }
    exit::code_for(&result)
}
