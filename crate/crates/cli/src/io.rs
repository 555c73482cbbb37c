//! Conversions between core types and the on-disk array formats, plus the
//! run-directory layout shared by the pipeline stages.
//!
//! Instance masks travel as u8 stacks of shape (K, H, W) — one plane per
//! instance, preserving overlaps that a flat label map cannot represent.
//! Embeddings are float32 (H, W, D), semantic maps float32 (H, W, 3),
//! probability and entropy maps float32 (K, H, W) / (H, W).

use std::path::{Path, PathBuf};

use probseg_core::evaluation::ScoredPrediction;
use probseg_core::{
    EmbeddingMap, Grid2D, InstanceMasks, Mask, SemanticMap, UncertaintyMap,
};

use crate::error::{CliError, Result};
use crate::npy::{read_npy, write_npy, NpyArray, NpyData};

pub fn masks_to_array(masks: &InstanceMasks) -> NpyArray {
    let (h, w) = masks.shape();
    let mut data = Vec::with_capacity(masks.len() * h * w);
    for m in masks.iter() {
        data.extend(m.iter().map(|&b| u8::from(b)));
    }
    NpyArray::new(vec![masks.len(), h, w], NpyData::U8(data)).expect("consistent shape")
}

pub fn array_to_masks(array: &NpyArray, path: &Path) -> Result<InstanceMasks> {
    if array.shape.len() != 3 {
        return Err(CliError::format(
            path,
            "shape",
            format!("expected (instances, height, width), got {:?}", array.shape),
        ));
    }
    let (k, h, w) = (array.shape[0], array.shape[1], array.shape[2]);
    let NpyData::U8(data) = &array.data else {
        return Err(CliError::format(
            path,
            "descr",
            "instance masks must be uint8 (|u1)",
        ));
    };
    let mut masks = Vec::with_capacity(k);
    for i in 0..k {
        let plane = &data[i * h * w..(i + 1) * h * w];
        masks.push(
            Mask::from_vec(h, w, plane.iter().map(|&v| v != 0).collect())
                .map_err(|e| CliError::data(e.to_string()))?,
        );
    }
    InstanceMasks::with_masks(h, w, masks).map_err(|e| CliError::data(e.to_string()))
}

pub fn embeddings_to_array(emb: &EmbeddingMap) -> NpyArray {
    let (h, w) = emb.shape();
    let data: Vec<f32> = emb.as_slice().iter().map(|&v| v as f32).collect();
    NpyArray::new(vec![h, w, emb.dim()], NpyData::F32(data)).expect("consistent shape")
}

pub fn array_to_embeddings(array: &NpyArray, path: &Path) -> Result<EmbeddingMap> {
    if array.shape.len() != 3 {
        return Err(CliError::format(
            path,
            "shape",
            format!("expected (height, width, dim), got {:?}", array.shape),
        ));
    }
    let NpyData::F32(data) = &array.data else {
        return Err(CliError::format(path, "descr", "embeddings must be float32 (<f4)"));
    };
    EmbeddingMap::from_vec(
        array.shape[0],
        array.shape[1],
        array.shape[2],
        data.iter().map(|&v| v as f64).collect(),
    )
    .map_err(|e| CliError::data(e.to_string()))
}

pub fn semantic_to_array(sem: &SemanticMap) -> NpyArray {
    let (h, w) = sem.shape();
    let mut data = Vec::with_capacity(h * w * 3);
    for triple in sem.as_slice() {
        data.extend(triple.iter().map(|&v| v as f32));
    }
    NpyArray::new(vec![h, w, 3], NpyData::F32(data)).expect("consistent shape")
}

pub fn array_to_semantic(array: &NpyArray, path: &Path) -> Result<SemanticMap> {
    if array.shape.len() != 3 || array.shape[2] != 3 {
        return Err(CliError::format(
            path,
            "shape",
            format!("expected (height, width, 3), got {:?}", array.shape),
        ));
    }
    let NpyData::F32(data) = &array.data else {
        return Err(CliError::format(path, "descr", "semantic maps must be float32 (<f4)"));
    };
    let probs: Vec<[f64; 3]> = data
        .chunks_exact(3)
        .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
        .collect();
    SemanticMap::from_probs(array.shape[0], array.shape[1], probs)
        .map_err(|e| CliError::data(e.to_string()))
}

pub fn entropy_to_array(unc: &UncertaintyMap) -> NpyArray {
    let (h, w) = unc.shape();
    let data: Vec<f32> = unc.grid().iter().map(|&v| v as f32).collect();
    NpyArray::new(vec![h, w], NpyData::F32(data)).expect("consistent shape")
}

pub fn array_to_entropy(array: &NpyArray, path: &Path) -> Result<UncertaintyMap> {
    if array.shape.len() != 2 {
        return Err(CliError::format(
            path,
            "shape",
            format!("expected (height, width), got {:?}", array.shape),
        ));
    }
    let NpyData::F32(data) = &array.data else {
        return Err(CliError::format(path, "descr", "entropy maps must be float32 (<f4)"));
    };
    let grid = Grid2D::from_vec(
        array.shape[0],
        array.shape[1],
        data.iter().map(|&v| v as f64).collect(),
    )
    .map_err(|e| CliError::data(e.to_string()))?;
    UncertaintyMap::from_grid(grid).map_err(|e| CliError::data(e.to_string()))
}

/// Probability maps as float32 (K, H, W).
pub fn probs_to_array(probs: &[Grid2D<f64>], h: usize, w: usize) -> NpyArray {
    let mut data = Vec::with_capacity(probs.len() * h * w);
    for grid in probs {
        data.extend(grid.iter().map(|&v| v as f32));
    }
    NpyArray::new(vec![probs.len(), h, w], NpyData::F32(data)).expect("consistent shape")
}

/// Binarize raw probability maps (external or persisted): a pixel belongs
/// to an instance iff p >= theta; empty instances are dropped and surviving
/// ones are scored by their mean probability over the binarized support.
pub fn scored_from_prob_array(
    array: &NpyArray,
    theta: f64,
    path: &Path,
) -> Result<ScoredPrediction> {
    if array.shape.len() != 3 {
        return Err(CliError::format(
            path,
            "shape",
            format!("expected (instances, height, width), got {:?}", array.shape),
        ));
    }
    let (k, h, w) = (array.shape[0], array.shape[1], array.shape[2]);
    let NpyData::F32(data) = &array.data else {
        return Err(CliError::format(path, "descr", "probability maps must be float32 (<f4)"));
    };
    if data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(CliError::format(path, "data", "probabilities must lie in [0, 1]"));
    }
    let mut masks = InstanceMasks::new(h, w).map_err(|e| CliError::data(e.to_string()))?;
    let mut scores = Vec::new();
    for i in 0..k {
        let plane = &data[i * h * w..(i + 1) * h * w];
        let support: Vec<f64> = plane
            .iter()
            .filter(|&&v| v as f64 >= theta)
            .map(|&v| v as f64)
            .collect();
        if support.is_empty() {
            continue;
        }
        let mask = Mask::from_vec(h, w, plane.iter().map(|&v| v as f64 >= theta).collect())
            .map_err(|e| CliError::data(e.to_string()))?;
        masks.push(mask).map_err(|e| CliError::data(e.to_string()))?;
        scores.push(support.iter().sum::<f64>() / support.len() as f64);
    }
    ScoredPrediction::new(masks, scores).map_err(|e| CliError::data(e.to_string()))
}

pub fn read_masks(path: &Path) -> Result<InstanceMasks> {
    array_to_masks(&read_npy(path)?, path)
}

pub fn write_masks(path: &Path, masks: &InstanceMasks) -> Result<()> {
    write_npy(path, &masks_to_array(masks))
}

pub fn read_scores(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let array = read_npy(path)?;
    if array.shape.len() != 1 {
        return Err(CliError::format(
            path,
            "shape",
            format!("expected a 1-d score vector, got {:?}", array.shape),
        ));
    }
    let NpyData::F32(data) = &array.data else {
        return Err(CliError::format(path, "descr", "scores must be float32 (<f4)"));
    };
    if data.len() != expected {
        return Err(CliError::data(format!(
            "{}: {} scores for {} instances",
            path.display(),
            data.len(),
            expected
        )));
    }
    Ok(data.iter().map(|&v| v as f64).collect())
}

pub fn write_scores(path: &Path, scores: &[f64]) -> Result<()> {
    let data: Vec<f32> = scores.iter().map(|&v| v as f32).collect();
    write_npy(
        path,
        &NpyArray::new(vec![scores.len()], NpyData::F32(data)).expect("1-d"),
    )
}

/// Atomic JSON write (temp file + rename).
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::data(format!("serialization failed: {e}")))?;
    std::fs::write(&tmp, text.as_bytes()).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Directory of one sample inside a run directory.
pub fn sample_dir(run: &Path, index: usize) -> PathBuf {
    run.join(format!("sample_{index:03}"))
}

/// Sample directories present under a run directory, in index order.
pub fn list_samples(run: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(run).map_err(|e| CliError::io(run, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(run, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("sample_") && entry.path().is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::data(format!(
            "{}: no sample_* directories found",
            run.display()
        )));
    }
    Ok(out)
}

pub const GT_MASKS: &str = "gt_masks.npy";
pub const SEM_GT: &str = "sem_gt.npy";
pub const PROB_MAPS: &str = "prob_maps.npy";
pub const ENTROPY: &str = "entropy.npy";
pub const PRED_MASKS: &str = "pred_masks.npy";
pub const PRED_SCORES: &str = "pred_scores.npy";

pub fn embeddings_file(draw: usize) -> String {
    format!("embeddings_{draw:02}.npy")
}

pub fn draw_masks_file(draw: usize) -> String {
    format!("draw_masks_{draw:02}.npy")
}

pub fn seg_masks_file(draw: usize) -> String {
    format!("seg_masks_{draw:02}.npy")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_round_trip_preserves_overlap() {
        let dir = tempfile::tempdir().unwrap();
        let a = Mask::from_vec(2, 2, vec![true, true, false, false]).unwrap();
        let b = Mask::from_vec(2, 2, vec![true, false, true, false]).unwrap();
        let masks = InstanceMasks::with_masks(2, 2, vec![a, b]).unwrap();
        let path = dir.path().join("m.npy");
        write_masks(&path, &masks).unwrap();
        let back = read_masks(&path).unwrap();
        assert_eq!(back, masks);
    }

    #[test]
    fn scored_from_probs_binarizes_and_scores() {
        let array = NpyArray::new(
            vec![2, 1, 4],
            NpyData::F32(vec![1.0, 0.875, 0.5, 0.0, 0.25, 0.125, 0.0, 0.0]),
        )
        .unwrap();
        let scored = scored_from_prob_array(&array, 0.75, Path::new("mem")).unwrap();
        assert_eq!(scored.masks.len(), 1); // second instance never reaches 0.75
        assert_eq!(scored.masks.get(0).as_slice(), &[true, true, false, false]);
        assert!((scored.scores[0] - 0.9375).abs() < 1e-9);
    }

    #[test]
    fn mask_ingest_rejects_wrong_dtype() {
        let array = NpyArray::new(vec![1, 1, 2], NpyData::F32(vec![1.0, 0.0])).unwrap();
        let err = array_to_masks(&array, Path::new("x.npy")).unwrap_err();
        assert_eq!(err.code(), "format");
    }
}
