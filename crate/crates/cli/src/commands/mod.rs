//! Subcommand implementations.

pub mod agglomerate;
pub mod evaluate;
pub mod losses_check;
pub mod metrics;
pub mod proofread;
pub mod render_cmd;
pub mod segment;
pub mod synth;

use std::path::{Path, PathBuf};

use probseg_core::evaluation::ScoredPrediction;
use probseg_core::InstanceMasks;

use crate::error::{CliError, Result};
use crate::io;

/// Resolve a required path argument, falling back to an environment
/// variable (IO paths are the only env-overridable settings).
pub fn resolve_path(flag: Option<PathBuf>, env_var: &str, flag_name: &str) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p);
    }
    if let Ok(v) = std::env::var(env_var) {
        if !v.is_empty() {
            return Ok(PathBuf::from(v));
        }
    }
    Err(CliError::config(format!(
        "missing {flag_name} (or set ${env_var})"
    )))
}

/// Load the prediction for a sample directory: binarized probability maps
/// when `prob_maps.npy` exists, otherwise `pred_masks.npy` with optional
/// `pred_scores.npy` (score 1.0 when absent).
pub fn load_prediction(dir: &Path, theta: f64) -> Result<ScoredPrediction> {
    let prob_path = dir.join(io::PROB_MAPS);
    if prob_path.exists() {
        let array = crate::npy::read_npy(&prob_path)?;
        return io::scored_from_prob_array(&array, theta, &prob_path);
    }
    let mask_path = dir.join(io::PRED_MASKS);
    if !mask_path.exists() {
        return Err(CliError::data(format!(
            "{}: neither {} nor {} present",
            dir.display(),
            io::PROB_MAPS,
            io::PRED_MASKS
        )));
    }
    let masks = io::read_masks(&mask_path)?;
    let scores_path = dir.join(io::PRED_SCORES);
    if scores_path.exists() {
        let scores = io::read_scores(&scores_path, masks.len())?;
        ScoredPrediction::new(masks, scores).map_err(|e| CliError::data(e.to_string()))
    } else {
        Ok(ScoredPrediction::uniform(masks))
    }
}

pub fn load_gt(dir: &Path) -> Result<InstanceMasks> {
    io::read_masks(&dir.join(io::GT_MASKS))
}
