//! `segment`: embeddings + semantic map -> instance masks.

use std::path::PathBuf;

use clap::Args;

use probseg_core::clustering::{segment, Kernel};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::io::{self, write_masks};
use crate::npy::read_npy;

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Run directory: segments every embeddings_*.npy of every sample into
    /// seg_masks_*.npy (env: PROBSEG_DIR).
    #[arg(long, conflicts_with_all = ["embeddings", "semantic", "out"])]
    pub dir: Option<PathBuf>,
    /// Single-shot mode: embedding map file.
    #[arg(long, requires = "semantic", requires = "out")]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub semantic: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub cluster_threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    #[arg(long)]
    pub seed_stride: Option<usize>,
    #[arg(long)]
    pub overlap_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum KernelArg {
    Flat,
    Gaussian,
}

pub fn run(args: SegmentArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.bandwidth {
        cfg.mean_shift.bandwidth = v;
        cfg.mean_shift.convergence_tol = 1e-3 * v;
        cfg.mean_shift.mode_merge_dist = v / 2.0;
    }
    if let Some(v) = args.cluster_threshold {
        cfg.mean_shift.cluster_threshold = v;
    }
    if let Some(k) = args.kernel {
        cfg.mean_shift.kernel = match k {
            KernelArg::Flat => Kernel::Flat,
            KernelArg::Gaussian => Kernel::Gaussian,
        };
    }
    if let Some(v) = args.seed_stride {
        cfg.mean_shift.seed_stride = v;
    }
    if let Some(v) = args.overlap_threshold {
        cfg.overlap_threshold = v;
    }

    if let (Some(emb_path), Some(sem_path), Some(out)) =
        (&args.embeddings, &args.semantic, &args.out)
    {
        let emb = io::array_to_embeddings(&read_npy(emb_path)?, emb_path)?;
        let sem = io::array_to_semantic(&read_npy(sem_path)?, sem_path)?;
        let masks = segment(&emb, &sem, &cfg.mean_shift, cfg.overlap_threshold)?;
        write_masks(out, &masks)?;
        println!("{}: {} instances", out.display(), masks.len());
        return Ok(());
    }

    let dir = super::resolve_path(args.dir, "PROBSEG_DIR", "--dir")?;
    for sample in io::list_samples(&dir)? {
        let sem_path = sample.join(io::SEM_GT);
        let sem = io::array_to_semantic(&read_npy(&sem_path)?, &sem_path)?;
        let mut t = 0usize;
        loop {
            let emb_path = sample.join(io::embeddings_file(t));
            if !emb_path.exists() {
                break;
            }
            let emb = io::array_to_embeddings(&read_npy(&emb_path)?, &emb_path)?;
            let masks = segment(&emb, &sem, &cfg.mean_shift, cfg.overlap_threshold)?;
            write_masks(&sample.join(io::seg_masks_file(t)), &masks)?;
            t += 1;
        }
        if t == 0 {
            return Err(CliError::data(format!(
                "{}: no embeddings_*.npy files found",
                sample.display()
            )));
        }
        println!("{}: segmented {} draws", sample.display(), t);
    }
    Ok(())
}
