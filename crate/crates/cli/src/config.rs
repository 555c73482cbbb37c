//! Pipeline configuration: one JSON-serializable struct bundling every
//! stage's parameters, with the standard constants as defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use probseg_core::clustering::MeanShiftConfig;
use probseg_core::losses::{ConcreteConfig, DiscriminativeConfig};
use probseg_core::synthetic::{NoiseConfig, SceneConfig};
use probseg_core::uncertainty::CombineMode;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Master seed; all per-sample and per-draw seeds derive from it.
    pub seed: u64,
    pub samples: usize,
    /// Number of posterior draws per sample.
    pub draws: usize,
    pub embedding_dim: usize,
    /// Threshold for binarizing probability maps.
    pub binarize_threshold: f64,
    pub patch_size: usize,
    /// Patch accuracy cutoff (strict >).
    pub accuracy_threshold: f64,
    /// Overlap-class probability cutoff for the overlap map.
    pub overlap_threshold: f64,
    /// Correction budgets for the proofreading simulation.
    pub corrections: Vec<usize>,
    pub combine: CombineMode,
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
    pub mean_shift: MeanShiftConfig,
    pub discriminative: DiscriminativeConfig,
    pub concrete: ConcreteConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 10,
            draws: 8,
            embedding_dim: 16,
            binarize_threshold: 0.75,
            patch_size: 4,
            accuracy_threshold: 0.5,
            overlap_threshold: 0.5,
            corrections: vec![0, 5, 10, 15, 20],
            combine: CombineMode::Max,
            scene: SceneConfig::default(),
            noise: NoiseConfig::default(),
            mean_shift: MeanShiftConfig::default(),
            discriminative: DiscriminativeConfig::default(),
            concrete: ConcreteConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::format(path, "config", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_standard_constants() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.draws, 8);
        assert_eq!(cfg.embedding_dim, 16);
        assert_eq!(cfg.binarize_threshold, 0.75);
        assert_eq!(cfg.patch_size, 4);
        assert_eq!(cfg.discriminative.distance_margin, 4.0);
        assert_eq!(cfg.discriminative.regularization_weight, 0.001);
        assert_eq!(cfg.concrete.prior_length_scale_sq, 1e-6);
        assert_eq!(cfg.concrete.entropy_weight, 1e-3);
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.seed = 99;
        cfg.noise.split_rate = 0.15;
        cfg.mean_shift.bandwidth = 1.5;
        let text = cfg.to_json();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let back: PipelineConfig = serde_json::from_str(r#"{"seed": 3}"#).unwrap();
        assert_eq!(back.seed, 3);
        assert_eq!(back.draws, 8);
    }
}
