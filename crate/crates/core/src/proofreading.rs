//! Guided-proofreading simulation: rank uncertainty peak patches across a
//! dataset, swap the predicted instances around the top peaks for their
//! ground-truth counterparts, and re-evaluate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate_dataset, MetricReport, ScoredPrediction};
use crate::grid::Mask;
use crate::mask::InstanceMasks;
use crate::maps::UncertaintyMap;

/// One ranked uncertainty peak on a sample's patch grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakPatch {
    pub sample_id: usize,
    pub patch_row: usize,
    pub patch_col: usize,
    pub mean_entropy: f64,
}

/// Which patches qualify for ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakMode {
    /// Only local maxima of the patch-entropy grid (8-neighborhood, ties
    /// allowed) with strictly positive mean entropy.
    LocalMaxima,
    /// Every patch with positive mean entropy.
    All,
}

fn patch_means(unc: &UncertaintyMap, patch_size: usize) -> (usize, usize, Vec<f64>) {
    let (h, w) = unc.shape();
    let rows = h.div_ceil(patch_size);
    let cols = w.div_ceil(patch_size);
    let mut means = vec![0.0; rows * cols];
    for pr in 0..rows {
        for pc in 0..cols {
            let r1 = ((pr + 1) * patch_size).min(h);
            let c1 = ((pc + 1) * patch_size).min(w);
            let mut sum = 0.0;
            let mut n = 0usize;
            for r in pr * patch_size..r1 {
                for c in pc * patch_size..c1 {
                    sum += unc.get(r, c);
                    n += 1;
                }
            }
            means[pr * cols + pc] = sum / n as f64;
        }
    }
    (rows, cols, means)
}

/// Rank the `k` highest uncertainty peak patches across a dataset.
///
/// A patch is a peak when its mean entropy is positive and not exceeded by
/// any of its 8 patch-grid neighbors. Peaks are ordered by mean entropy
/// descending, with (sample_id, row, col) breaking exact ties.
pub fn top_uncertainty_peaks(
    maps: &[(usize, &UncertaintyMap)],
    k: usize,
    patch_size: usize,
) -> Result<Vec<PeakPatch>> {
    top_uncertainty_peaks_with(maps, k, patch_size, PeakMode::LocalMaxima)
}

pub fn top_uncertainty_peaks_with(
    maps: &[(usize, &UncertaintyMap)],
    k: usize,
    patch_size: usize,
    mode: PeakMode,
) -> Result<Vec<PeakPatch>> {
    if patch_size == 0 {
        return Err(Error::invalid_param("patch_size", "must be >= 1"));
    }
    let mut peaks = Vec::new();
    for &(sample_id, unc) in maps {
        let (rows, cols, means) = patch_means(unc, patch_size);
        for pr in 0..rows {
            for pc in 0..cols {
                let m = means[pr * cols + pc];
                if m <= 0.0 {
                    continue;
                }
                if mode == PeakMode::LocalMaxima {
                    let mut is_peak = true;
                    'neigh: for dr in -1i64..=1 {
                        for dc in -1i64..=1 {
                            if dr == 0 && dc == 0 {
                                continue;
                            }
                            let nr = pr as i64 + dr;
                            let nc = pc as i64 + dc;
                            if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                                continue;
                            }
                            if means[nr as usize * cols + nc as usize] > m {
                                is_peak = false;
                                break 'neigh;
                            }
                        }
                    }
                    if !is_peak {
                        continue;
                    }
                }
                peaks.push(PeakPatch {
                    sample_id,
                    patch_row: pr,
                    patch_col: pc,
                    mean_entropy: m,
                });
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.mean_entropy
            .total_cmp(&a.mean_entropy)
            .then(a.sample_id.cmp(&b.sample_id))
            .then(a.patch_row.cmp(&b.patch_row))
            .then(a.patch_col.cmp(&b.patch_col))
    });
    peaks.truncate(k);
    Ok(peaks)
}

/// Pixel region covered by the peaks after one-patch 8-neighborhood
/// dilation.
fn peak_region(peaks: &[&PeakPatch], patch_size: usize, h: usize, w: usize) -> Mask {
    let mut region = Mask::filled(h, w, false).expect("valid shape");
    for p in peaks {
        let r0 = p.patch_row.saturating_sub(1) * patch_size;
        let c0 = p.patch_col.saturating_sub(1) * patch_size;
        let r1 = ((p.patch_row + 2) * patch_size).min(h);
        let c1 = ((p.patch_col + 2) * patch_size).min(w);
        for r in r0..r1 {
            for c in c0..c1 {
                region.set(r, c, true);
            }
        }
    }
    region
}

/// Apply ground-truth corrections around the given peaks (all belonging to
/// this sample): every predicted instance intersecting the dilated peak
/// region is removed and every ground-truth instance intersecting it is
/// inserted, each at most once. Applying the same peaks twice is a no-op.
pub fn apply_corrections(
    pred: &InstanceMasks,
    gt: &InstanceMasks,
    peaks: &[PeakPatch],
    patch_size: usize,
) -> Result<InstanceMasks> {
    Ok(apply_corrections_scored(
        &ScoredPrediction::uniform(pred.clone()),
        gt,
        peaks,
        patch_size,
    )?
    .masks)
}

/// Score-preserving variant: surviving predictions keep their scores and
/// inserted ground-truth masks carry score 1.0.
pub fn apply_corrections_scored(
    pred: &ScoredPrediction,
    gt: &InstanceMasks,
    peaks: &[PeakPatch],
    patch_size: usize,
) -> Result<ScoredPrediction> {
    if pred.masks.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            expected: gt.shape(),
            actual: pred.masks.shape(),
        });
    }
    if patch_size == 0 {
        return Err(Error::invalid_param("patch_size", "must be >= 1"));
    }
    if peaks.is_empty() {
        return Ok(pred.clone());
    }
    let (h, w) = gt.shape();
    let region = peak_region(&peaks.iter().collect::<Vec<_>>(), patch_size, h, w);

    let mut masks = InstanceMasks::new(h, w)?;
    let mut scores = Vec::new();
    for (mask, &score) in pred.masks.iter().zip(&pred.scores) {
        if !mask.intersects(&region) {
            masks.push(mask.clone())?;
            scores.push(score);
        }
    }
    for mask in gt.iter() {
        if mask.intersects(&region) {
            masks.push(mask.clone())?;
            scores.push(1.0);
        }
    }
    ScoredPrediction::new(masks, scores)
}

/// One proofreading sample: a prediction, its ground truth and the combined
/// uncertainty map the peaks are ranked on.
#[derive(Debug, Clone)]
pub struct ProofreadSample {
    pub pred: ScoredPrediction,
    pub gt: InstanceMasks,
    pub uncertainty: UncertaintyMap,
}

/// One row of the simulation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationRow {
    pub corrections: usize,
    pub report: MetricReport,
}

/// Run the correction simulation for every budget in `ks` (a `k = 0`
/// baseline row is prepended when missing). Peaks are ranked once across
/// the whole dataset, so the per-k correction sets are nested.
pub fn simulate(
    samples: &[ProofreadSample],
    ks: &[usize],
    patch_size: usize,
) -> Result<Vec<SimulationRow>> {
    if ks.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid_param("ks", "must be ascending"));
    }
    let maps: Vec<(usize, &UncertaintyMap)> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (i, &s.uncertainty))
        .collect();
    let all_peaks = top_uncertainty_peaks(&maps, usize::MAX, patch_size)?;

    let mut budgets: Vec<usize> = Vec::new();
    if ks.first() != Some(&0) {
        budgets.push(0);
    }
    budgets.extend_from_slice(ks);

    let mut rows = Vec::with_capacity(budgets.len());
    for &k in &budgets {
        let top_k = &all_peaks[..k.min(all_peaks.len())];
        let mut corrected = Vec::with_capacity(samples.len());
        for (i, sample) in samples.iter().enumerate() {
            let sample_peaks: Vec<PeakPatch> = top_k
                .iter()
                .filter(|p| p.sample_id == i)
                .copied()
                .collect();
            let pred =
                apply_corrections_scored(&sample.pred, &sample.gt, &sample_peaks, patch_size)?;
            corrected.push((pred, sample.gt.clone()));
        }
        let (report, _skipped) = evaluate_dataset(&corrected)?;
        rows.push(SimulationRow {
            corrections: k,
            report,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;

    fn unc_with_hot(h: usize, w: usize, hot: &[(usize, usize, f64)]) -> UncertaintyMap {
        let mut g = Grid2D::filled(h, w, 0.0).unwrap();
        for &(r, c, v) in hot {
            g.set(r, c, v);
        }
        UncertaintyMap::from_grid(g).unwrap()
    }

    #[test]
    fn zero_entropy_dataset_has_no_peaks() {
        let unc = unc_with_hot(8, 8, &[]);
        let peaks = top_uncertainty_peaks(&[(0, &unc)], 10, 4).unwrap();
        assert!(peaks.is_empty());
    }

    #[test]
    fn single_hot_patch_is_rank_one() {
        let unc = unc_with_hot(8, 8, &[(5, 5, 0.6)]);
        let peaks = top_uncertainty_peaks(&[(0, &unc)], 10, 4).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].patch_row, peaks[0].patch_col), (1, 1));
    }

    #[test]
    fn peaks_rank_across_samples() {
        let a = unc_with_hot(8, 8, &[(1, 1, 0.6)]);
        let b = unc_with_hot(8, 8, &[(1, 1, 0.4)]);
        let peaks = top_uncertainty_peaks(&[(0, &a), (1, &b)], 1, 4).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].sample_id, 0);
    }

    #[test]
    fn non_maximum_patches_are_filtered() {
        // neighbor patch (0,1) has lower mean than (0,0): only (0,0) peaks
        let unc = unc_with_hot(4, 8, &[(0, 0, 0.6), (0, 4, 0.3)]);
        let peaks = top_uncertainty_peaks(&[(0, &unc)], 10, 4).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].patch_row, peaks[0].patch_col), (0, 0));
        let all = top_uncertainty_peaks_with(&[(0, &unc)], 10, 4, PeakMode::All).unwrap();
        assert_eq!(all.len(), 2);
    }

    fn masks_grid(h: usize, w: usize, rects: &[(usize, usize, usize, usize)]) -> InstanceMasks {
        let masks = rects
            .iter()
            .map(|&(r0, c0, r1, c1)| {
                let mut m = Mask::filled(h, w, false).unwrap();
                for r in r0..r1 {
                    for c in c0..c1 {
                        m.set(r, c, true);
                    }
                }
                m
            })
            .collect();
        InstanceMasks::with_masks(h, w, masks).unwrap()
    }

    #[test]
    fn no_peaks_is_identity() {
        let pred = masks_grid(8, 8, &[(0, 0, 2, 2)]);
        let gt = masks_grid(8, 8, &[(0, 0, 3, 3)]);
        let out = apply_corrections(&pred, &gt, &[], 4).unwrap();
        assert_eq!(out, pred);
    }

    #[test]
    fn peak_over_perfect_instance_is_identity_up_to_copy() {
        let gt = masks_grid(8, 8, &[(0, 0, 3, 3)]);
        let peak = PeakPatch {
            sample_id: 0,
            patch_row: 0,
            patch_col: 0,
            mean_entropy: 0.5,
        };
        let out = apply_corrections(&gt, &gt, &[peak], 4).unwrap();
        assert_eq!(out, gt);
    }

    #[test]
    fn false_merge_swapped_for_two_gt_instances() {
        // prediction merges two ground-truth worms into one mask
        let gt = masks_grid(8, 12, &[(2, 0, 4, 5), (2, 6, 4, 11)]);
        let pred = masks_grid(8, 12, &[(2, 0, 4, 11)]);
        let peak = PeakPatch {
            sample_id: 0,
            patch_row: 0,
            patch_col: 1,
            mean_entropy: 0.4,
        };
        let out = apply_corrections(&pred, &gt, &[peak], 4).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.get(0).as_slice(), gt.get(0).as_slice());
        assert_eq!(out.get(1).as_slice(), gt.get(1).as_slice());
    }

    #[test]
    fn corrections_are_idempotent() {
        let gt = masks_grid(16, 16, &[(0, 0, 4, 4), (10, 10, 14, 14)]);
        let pred = masks_grid(16, 16, &[(0, 0, 4, 4), (10, 10, 12, 12)]);
        let peak = PeakPatch {
            sample_id: 0,
            patch_row: 3,
            patch_col: 3,
            mean_entropy: 0.3,
        };
        let once = apply_corrections(&pred, &gt, &[peak], 4).unwrap();
        let twice = apply_corrections(&once, &gt, &[peak], 4).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn corrections_leave_far_instances_untouched() {
        let gt = masks_grid(16, 16, &[(0, 0, 2, 2), (12, 12, 15, 15)]);
        let pred = masks_grid(16, 16, &[(0, 0, 2, 3), (12, 12, 15, 15)]);
        let peak = PeakPatch {
            sample_id: 0,
            patch_row: 0,
            patch_col: 0,
            mean_entropy: 0.3,
        };
        let out = apply_corrections(&pred, &gt, &[peak], 4).unwrap();
        // far instance (12..15) passes through unchanged, near one swapped
        assert_eq!(out.len(), 2);
        assert!(out.iter().any(|m| m.as_slice() == pred.get(1).as_slice()));
        assert!(out.iter().any(|m| m.as_slice() == gt.get(0).as_slice()));
    }

    #[test]
    fn simulation_rows_for_noise_free_predictions_are_identical() {
        let gt = masks_grid(8, 8, &[(0, 0, 3, 3), (5, 5, 8, 8)]);
        let sample = ProofreadSample {
            pred: ScoredPrediction::uniform(gt.clone()),
            gt: gt.clone(),
            uncertainty: unc_with_hot(8, 8, &[]),
        };
        let rows = simulate(&[sample], &[0, 2, 4], 4).unwrap();
        assert_eq!(rows.len(), 3);
        for row in &rows {
            assert_eq!(row.report.av_ap_dsb, 1.0);
        }
    }

    #[test]
    fn simulation_fixes_peaked_error() {
        // wrong prediction under the entropy peak, perfect elsewhere
        let gt = masks_grid(8, 16, &[(0, 0, 3, 3), (4, 8, 7, 15)]);
        let pred = masks_grid(8, 16, &[(0, 0, 3, 3), (4, 8, 7, 11)]);
        let unc = unc_with_hot(8, 16, &[(5, 12, 0.6)]);
        let sample = ProofreadSample {
            pred: ScoredPrediction::uniform(pred),
            gt: gt.clone(),
            uncertainty: unc,
        };
        let rows = simulate(&[sample], &[0, 1], 4).unwrap();
        assert!(rows[0].report.av_ap_dsb < 1.0);
        assert_eq!(rows[1].report.av_ap_dsb, 1.0);
    }
}
