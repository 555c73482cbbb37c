//! `agglomerate`: fuse per-draw instance masks into probability maps and
//! the combined entropy map.

use std::path::{Path, PathBuf};

use clap::Args;

use probseg_core::agglomeration::{agglomerate_draws, DrawSet};
use probseg_core::uncertainty::{entropy_map_with, CombineMode};
use probseg_core::InstanceMasks;

use crate::error::{CliError, Result};
use crate::io::{self, read_masks};
use crate::npy::write_npy;

#[derive(Debug, Args)]
pub struct AgglomerateArgs {
    /// Run directory: per sample, fuse seg_masks_*.npy (or draw_masks_*.npy
    /// when no segmentations exist) into prob_maps.npy + entropy.npy
    /// (env: PROBSEG_DIR).
    #[arg(long, conflicts_with_all = ["inputs", "out_prob", "out_entropy"])]
    pub dir: Option<PathBuf>,
    /// Explicit list of per-draw mask stacks.
    #[arg(long, num_args = 1.., requires = "out_prob", requires = "out_entropy")]
    pub inputs: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub out_prob: Option<PathBuf>,
    #[arg(long)]
    pub out_entropy: Option<PathBuf>,
    /// Entropy reduction over instances.
    #[arg(long, value_enum, default_value = "max")]
    pub combine: CombineArg,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum CombineArg {
    Max,
    Sum,
}

impl From<CombineArg> for CombineMode {
    fn from(v: CombineArg) -> Self {
        match v {
            CombineArg::Max => CombineMode::Max,
            CombineArg::Sum => CombineMode::Sum,
        }
    }
}

fn fuse(draws: Vec<InstanceMasks>, prob_path: &Path, ent_path: &Path, mode: CombineMode) -> Result<()> {
    let set = DrawSet::new(draws).map_err(|e| CliError::data(e.to_string()))?;
    let p = agglomerate_draws(&set);
    let (h, w) = p.shape();
    let grids: Vec<_> = (0..p.n_instances()).map(|i| p.prob_grid(i)).collect();
    write_npy(prob_path, &io::probs_to_array(&grids, h, w))?;
    let (_, combined) = entropy_map_with(&p, mode);
    write_npy(ent_path, &io::entropy_to_array(&combined))?;
    Ok(())
}

pub fn run(args: AgglomerateArgs) -> Result<()> {
    let mode: CombineMode = args.combine.into();
    if let (Some(inputs), Some(out_prob), Some(out_entropy)) =
        (&args.inputs, &args.out_prob, &args.out_entropy)
    {
        let draws = inputs
            .iter()
            .map(|p| read_masks(p))
            .collect::<Result<Vec<_>>>()?;
        fuse(draws, out_prob, out_entropy, mode)?;
        println!("fused {} draws into {}", inputs.len(), out_prob.display());
        return Ok(());
    }

    let dir = super::resolve_path(args.dir, "PROBSEG_DIR", "--dir")?;
    for sample in io::list_samples(&dir)? {
        let mut draws = Vec::new();
        for file_of in [io::seg_masks_file as fn(usize) -> String, io::draw_masks_file] {
            let mut t = 0usize;
            loop {
                let path = sample.join(file_of(t));
                if !path.exists() {
                    break;
                }
                draws.push(read_masks(&path)?);
                t += 1;
            }
            if t > 0 {
                break; // prefer segmented draws over raw simulated draws
            }
        }
        if draws.is_empty() {
            return Err(CliError::data(format!(
                "{}: no seg_masks_*.npy or draw_masks_*.npy found",
                sample.display()
            )));
        }
        let n = draws.len();
        fuse(
            draws,
            &sample.join(io::PROB_MAPS),
            &sample.join(io::ENTROPY),
            mode,
        )?;
        println!("{}: fused {} draws", sample.display(), n);
    }
    Ok(())
}
