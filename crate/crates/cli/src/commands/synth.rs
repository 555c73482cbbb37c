//! `synth`: generate scenes, posterior draws and per-draw embedding maps.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use probseg_core::seed::split_seed;
use probseg_core::synthetic::{generate_scene, simulate_draws, simulate_embeddings};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::io::{self, write_json, write_masks};
use crate::npy::write_npy;

use super::resolve_path;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output run directory (env: PROBSEG_OUT).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON pipeline config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub split_rate: Option<f64>,
    #[arg(long)]
    pub merge_rate: Option<f64>,
    #[arg(long)]
    pub dropout_rate: Option<f64>,
    #[arg(long)]
    pub overlap_fraction: Option<f64>,
    /// What to write per draw: embeddings, draws, or both.
    #[arg(long, default_value = "both")]
    pub emit: Emit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Emit {
    Embeddings,
    Draws,
    Both,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config: PipelineConfig,
    pub samples: Vec<ManifestSample>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestSample {
    pub index: usize,
    pub dir: String,
    pub placed_instances: usize,
    pub requested_instances: usize,
}

// Stream ids for per-sample seed derivation (documented in the manifest's
// reproducibility contract: sample_seed = split_seed(seed, index), then
// per-draw embedding seeds = split_seed(sample_seed, 0x200 + draw)).
const EMBEDDING_DRAW_STREAM_BASE: u64 = 0x200;

pub fn run(args: SynthArgs) -> Result<()> {
    let out = resolve_path(args.out, "PROBSEG_OUT", "--out")?;
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.samples {
        cfg.samples = v;
    }
    if let Some(v) = args.height {
        cfg.scene.height = v;
    }
    if let Some(v) = args.width {
        cfg.scene.width = v;
    }
    if let Some(v) = args.instances {
        cfg.scene.n_instances = v;
    }
    if let Some(v) = args.draws {
        cfg.draws = v;
    }
    if let Some(v) = args.dim {
        cfg.embedding_dim = v;
    }
    if let Some(v) = args.sigma {
        cfg.noise.embedding_sigma = v;
    }
    if let Some(v) = args.split_rate {
        cfg.noise.split_rate = v;
    }
    if let Some(v) = args.merge_rate {
        cfg.noise.merge_rate = v;
    }
    if let Some(v) = args.dropout_rate {
        cfg.noise.dropout_rate = v;
    }
    if let Some(v) = args.overlap_fraction {
        cfg.scene.overlap_fraction = v;
    }
    if cfg.draws == 0 {
        return Err(CliError::config("--draws must be >= 1"));
    }

    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut manifest_samples = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let sample_seed = split_seed(cfg.seed, i as u64);
        let dir = io::sample_dir(&out, i);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;

        let mut scene_cfg = cfg.scene.clone();
        scene_cfg.rng_seed = sample_seed;
        let scene = generate_scene(&scene_cfg)?;
        if scene.placed < scene.requested {
            eprintln!(
                "warning: sample {i}: placed {} of {} instances",
                scene.placed, scene.requested
            );
        }
        write_masks(&dir.join(io::GT_MASKS), &scene.gt)?;
        write_npy(&dir.join(io::SEM_GT), &io::semantic_to_array(&scene.sem_gt))?;

        if args.emit != Emit::Embeddings {
            let mut noise = cfg.noise.clone();
            noise.rng_seed = sample_seed;
            let sim = simulate_draws(&scene.gt, &noise, cfg.draws)?;
            for (t, draw) in sim.draws.iter().enumerate() {
                write_masks(&dir.join(io::draw_masks_file(t)), draw)?;
            }
            write_json(&dir.join("draw_events.json"), &sim.events)?;
        }
        if args.emit != Emit::Draws {
            for t in 0..cfg.draws {
                let mut noise = cfg.noise.clone();
                noise.rng_seed = split_seed(sample_seed, EMBEDDING_DRAW_STREAM_BASE + t as u64);
                let emb = simulate_embeddings(&scene.gt, &noise, cfg.embedding_dim)?;
                write_npy(
                    &dir.join(io::embeddings_file(t)),
                    &io::embeddings_to_array(&emb),
                )?;
            }
        }
        manifest_samples.push(ManifestSample {
            index: i,
            dir: format!("sample_{i:03}"),
            placed_instances: scene.placed,
            requested_instances: scene.requested,
        });
    }
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            config: cfg,
            samples: manifest_samples,
        },
    )?;
    println!("wrote {} samples to {}", cfg_samples(&out)?, out.display());
    Ok(())
}

fn cfg_samples(out: &std::path::Path) -> Result<usize> {
    Ok(io::list_samples(out)?.len())
}
