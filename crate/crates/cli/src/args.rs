use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hintpc::geom::NeighborhoodSize;
use hintpc::model::ModelConfig;

#[derive(Debug, Parser)]
#[command(name = "hintpc", version, about = "Lossless dynamic point-cloud geometry coding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn parse_window(s: &str) -> Result<NeighborhoodSize, String> {
    let v: usize = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    NeighborhoodSize::from_volume(v).map_err(|_| format!("window must be 7, 27 or 125, got {v}"))
}

/// Model switches. On `train` they define the model; elsewhere they override
/// the checkpoint's switches (shape-changing ones must agree with it).
#[derive(Debug, Clone, Args, Default)]
pub struct ModelFlags {
    /// Parent-level existence window (7, 27 or 125).
    #[arg(long, value_parser = parse_window)]
    pub vd: Option<NeighborhoodSize>,
    /// Child-level previous-frame window (7, 27 or 125).
    #[arg(long, value_parser = parse_window)]
    pub vfine: Option<NeighborhoodSize>,
    #[arg(long)]
    pub no_coarse: bool,
    #[arg(long)]
    pub no_fine: bool,
    #[arg(long)]
    pub no_sibling: bool,
    /// Same as --no-coarse --no-fine --no-sibling.
    #[arg(long)]
    pub spatial_only: bool,
}

impl ModelFlags {
    pub fn apply(&self, mut c: ModelConfig) -> ModelConfig {
        if let Some(v) = self.vd {
            c.vd = v;
        }
        if let Some(v) = self.vfine {
            c.vfine = v;
        }
        if self.no_coarse || self.spatial_only {
            c.coarse = false;
        }
        if self.no_fine || self.spatial_only {
            c.fine = false;
        }
        if self.no_sibling || self.spatial_only {
            c.sibling = false;
        }
        c
    }
}

/// Frame inputs: files, directories or glob patterns, sorted by path.
#[derive(Debug, Clone, Args)]
pub struct InputFlags {
    pub inputs: Vec<String>,
    /// File listing frames in coding order, one path per line; replaces
    /// the positional inputs and the lexicographic sort.
    #[arg(long)]
    pub order_file: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a sequence of PLY frames into one .hint file per frame.
    Encode {
        #[command(flatten)]
        input: InputFlags,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Leaf level (bits per axis).
        #[arg(long, default_value_t = 10)]
        depth: u8,
        /// Per-frame statistics; defaults to <output>/stats.csv.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Decode .hint files back to PLY (voxel coordinates).
    Decode {
        #[command(flatten)]
        input: InputFlags,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Train the entropy model on PLY sequences or `synthetic:<kind>`.
    Train {
        /// Directory of frames, directory of sequence directories, or
        /// `synthetic:{static|translate|jitter|morph|random|mixed}`.
        dataset: String,
        /// Final checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        /// Stop after this many optimizer steps.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 6)]
        depth: u8,
        /// Synthetic data: frames per sequence.
        #[arg(long, default_value_t = 5)]
        frames: usize,
        /// Synthetic data: number of sequences.
        #[arg(long, default_value_t = 8)]
        sequences: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-epoch checkpoints; defaults to <out>.epochs/.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Encode, decode and time a dataset; writes a CSV report.
    Bench {
        dataset: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        depth: u8,
        #[arg(long, default_value_t = 5)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        sequences: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sequences coded in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Compare quantized originals with decoded frames, frame by frame.
    Verify {
        original: String,
        decoded: String,
        #[arg(long, default_value_t = 10)]
        depth: u8,
    },
}
