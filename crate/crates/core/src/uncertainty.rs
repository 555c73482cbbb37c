//! Entropy-based uncertainty maps and the patch-level
//! accuracy-vs-uncertainty metrics.

use serde::{Deserialize, Serialize};

use crate::agglomeration::{hungarian_max, pairwise_iou_matrix};
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::losses::bernoulli_entropy;
use crate::mask::InstanceMasks;
use crate::maps::{ProbabilisticInstanceMap, UncertaintyMap};

/// How per-instance entropies reduce to one per-pixel value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    /// Pixel-wise maximum (default): preserves the strongest disagreement.
    Max,
    /// Pixel-wise sum; may exceed the single-Bernoulli bound ln 2.
    Sum,
}

/// Per-instance Bernoulli entropy of the probability maps, plus the
/// pixel-wise maximum over instances as the combined map.
pub fn entropy_map(p: &ProbabilisticInstanceMap) -> (Vec<UncertaintyMap>, UncertaintyMap) {
    entropy_map_with(p, CombineMode::Max)
}

pub fn entropy_map_with(
    p: &ProbabilisticInstanceMap,
    mode: CombineMode,
) -> (Vec<UncertaintyMap>, UncertaintyMap) {
    let (h, w) = p.shape();
    let t = p.n_draws() as f64;
    let mut combined = Grid2D::filled(h, w, 0.0f64).expect("valid shape");
    let mut per_instance = Vec::with_capacity(p.n_instances());
    for i in 0..p.n_instances() {
        let ent = p.counts(i).map(|&k| {
            bernoulli_entropy(k as f64 / t).expect("draw frequencies lie in [0, 1]")
        });
        for (c, &e) in combined.as_mut_slice().iter_mut().zip(ent.iter()) {
            match mode {
                CombineMode::Max => *c = c.max(e),
                CombineMode::Sum => *c += e,
            }
        }
        per_instance.push(UncertaintyMap::from_grid(ent).expect("entropy is non-negative"));
    }
    (
        per_instance,
        UncertaintyMap::from_grid(combined).expect("entropy is non-negative"),
    )
}

/// The four patch counts behind the conditional uncertainty metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchCounts {
    pub accurate_certain: usize,
    pub accurate_uncertain: usize,
    pub inaccurate_certain: usize,
    pub inaccurate_uncertain: usize,
}

impl PatchCounts {
    pub fn total(&self) -> usize {
        self.accurate_certain
            + self.accurate_uncertain
            + self.inaccurate_certain
            + self.inaccurate_uncertain
    }
}

/// Threshold-independent per-patch statistics: retained patches with their
/// mean prediction agreement and mean uncertainty.
#[derive(Debug, Clone)]
pub struct PatchStats {
    entries: Vec<PatchStat>,
}

#[derive(Debug, Clone, Copy)]
pub struct PatchStat {
    pub patch_row: usize,
    pub patch_col: usize,
    pub mean_agreement: f64,
    pub mean_uncertainty: f64,
}

impl PatchStats {
    pub fn entries(&self) -> &[PatchStat] {
        &self.entries
    }
}

const MAX_INSTANCES_FOR_AGREEMENT: usize = 128;

/// Compute retained patches and their statistics.
///
/// Predicted instances are matched one-to-one to ground-truth instances by
/// IoU-maximizing assignment; a pixel agrees when its set of predicted
/// instances, relabeled through that matching, equals its set of
/// ground-truth instances (both empty counts as agreement). Patches that
/// touch no foreground in either prediction or ground truth are excluded.
/// Edge patches keep their actual pixel count.
pub fn patch_stats(
    pred: &InstanceMasks,
    gt: &InstanceMasks,
    unc: &UncertaintyMap,
    patch_size: usize,
) -> Result<PatchStats> {
    if patch_size == 0 {
        return Err(Error::invalid_param("patch_size", "must be >= 1"));
    }
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            expected: gt.shape(),
            actual: pred.shape(),
        });
    }
    if unc.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            expected: gt.shape(),
            actual: unc.shape(),
        });
    }
    if pred.len() > MAX_INSTANCES_FOR_AGREEMENT || gt.len() > MAX_INSTANCES_FOR_AGREEMENT {
        return Err(Error::invalid_param(
            "instances",
            format!("agreement supports at most {MAX_INSTANCES_FOR_AGREEMENT} instances"),
        ));
    }

    let (h, w) = gt.shape();
    let matching = hungarian_max(&pairwise_iou_matrix(pred, gt)?);
    let mut pred_to_gt: Vec<Option<usize>> = vec![None; pred.len()];
    for &(pi, gi) in &matching.pairs {
        pred_to_gt[pi] = Some(gi);
    }

    // Per-pixel label sets as bitmasks over ground-truth ids; a pixel that
    // carries any unmatched predicted instance can never agree.
    let mut gt_bits = vec![0u128; h * w];
    for (gi, mask) in gt.iter().enumerate() {
        for (bits, &on) in gt_bits.iter_mut().zip(mask.iter()) {
            if on {
                *bits |= 1u128 << gi;
            }
        }
    }
    let mut pred_bits = vec![0u128; h * w];
    let mut poisoned = vec![false; h * w];
    for (pi, mask) in pred.iter().enumerate() {
        match pred_to_gt[pi] {
            Some(gi) => {
                for (bits, &on) in pred_bits.iter_mut().zip(mask.iter()) {
                    if on {
                        *bits |= 1u128 << gi;
                    }
                }
            }
            None => {
                for (p, &on) in poisoned.iter_mut().zip(mask.iter()) {
                    *p = *p || on;
                }
            }
        }
    }

    let patch_rows = h.div_ceil(patch_size);
    let patch_cols = w.div_ceil(patch_size);
    let mut entries = Vec::new();
    for pr in 0..patch_rows {
        for pc in 0..patch_cols {
            let r0 = pr * patch_size;
            let c0 = pc * patch_size;
            let r1 = (r0 + patch_size).min(h);
            let c1 = (c0 + patch_size).min(w);
            let mut n_pixels = 0usize;
            let mut agree_sum = 0usize;
            let mut unc_sum = 0.0;
            let mut touches_fg = false;
            for r in r0..r1 {
                for c in c0..c1 {
                    let idx = r * w + c;
                    n_pixels += 1;
                    let agree = !poisoned[idx] && pred_bits[idx] == gt_bits[idx];
                    agree_sum += usize::from(agree);
                    unc_sum += unc.get(r, c);
                    if gt_bits[idx] != 0 || pred_bits[idx] != 0 || poisoned[idx] {
                        touches_fg = true;
                    }
                }
            }
            if touches_fg {
                entries.push(PatchStat {
                    patch_row: pr,
                    patch_col: pc,
                    mean_agreement: agree_sum as f64 / n_pixels as f64,
                    mean_uncertainty: unc_sum / n_pixels as f64,
                });
            }
        }
    }
    Ok(PatchStats { entries })
}

/// Bucket patch statistics into the four counts. A patch is accurate when
/// its mean agreement strictly exceeds `acc_threshold`, and uncertain when
/// its mean uncertainty is >= `unc_threshold`.
pub fn counts_from_stats(
    stats: &PatchStats,
    acc_threshold: f64,
    unc_threshold: f64,
) -> PatchCounts {
    let mut counts = PatchCounts {
        accurate_certain: 0,
        accurate_uncertain: 0,
        inaccurate_certain: 0,
        inaccurate_uncertain: 0,
    };
    for s in &stats.entries {
        let accurate = s.mean_agreement > acc_threshold;
        let uncertain = s.mean_uncertainty >= unc_threshold;
        match (accurate, uncertain) {
            (true, false) => counts.accurate_certain += 1,
            (true, true) => counts.accurate_uncertain += 1,
            (false, false) => counts.inaccurate_certain += 1,
            (false, true) => counts.inaccurate_uncertain += 1,
        }
    }
    counts
}

/// Patch counts straight from masks and an uncertainty map.
pub fn patch_counts(
    pred: &InstanceMasks,
    gt: &InstanceMasks,
    unc: &UncertaintyMap,
    patch_size: usize,
    acc_threshold: f64,
    unc_threshold: f64,
) -> Result<PatchCounts> {
    let stats = patch_stats(pred, gt, unc, patch_size)?;
    Ok(counts_from_stats(&stats, acc_threshold, unc_threshold))
}

/// The conditional probabilities and their combination. A value is `None`
/// when its denominator is zero; it is never coerced to 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalProbs {
    pub accurate_given_certain: Option<f64>,
    pub uncertain_given_inaccurate: Option<f64>,
    pub pavpu: Option<f64>,
}

pub fn conditional_probs(c: &PatchCounts) -> ConditionalProbs {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    ConditionalProbs {
        accurate_given_certain: ratio(
            c.accurate_certain,
            c.accurate_certain + c.inaccurate_certain,
        ),
        uncertain_given_inaccurate: ratio(
            c.inaccurate_uncertain,
            c.inaccurate_certain + c.inaccurate_uncertain,
        ),
        pavpu: ratio(c.accurate_certain + c.inaccurate_uncertain, c.total()),
    }
}

/// Conditional probabilities as a function of the uncertainty threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintyCurve {
    pub thresholds: Vec<f64>,
    pub points: Vec<ConditionalProbs>,
}

/// Sweep the uncertainty threshold over cached patch statistics.
pub fn uncertainty_curves(
    pred: &InstanceMasks,
    gt: &InstanceMasks,
    unc: &UncertaintyMap,
    patch_size: usize,
    acc_threshold: f64,
    thresholds: &[f64],
) -> Result<UncertaintyCurve> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid_param("thresholds", "must be ascending"));
    }
    let stats = patch_stats(pred, gt, unc, patch_size)?;
    let points = thresholds
        .iter()
        .map(|&t| conditional_probs(&counts_from_stats(&stats, acc_threshold, t)))
        .collect();
    Ok(UncertaintyCurve {
        thresholds: thresholds.to_vec(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mask;
    use approx::assert_abs_diff_eq;

    fn masks_1xn(n: usize, instances: &[&[usize]]) -> InstanceMasks {
        let masks = instances
            .iter()
            .map(|on| {
                let mut m = Mask::filled(1, n, false).unwrap();
                for &i in *on {
                    m.set(0, i, true);
                }
                m
            })
            .collect();
        InstanceMasks::with_masks(1, n, masks).unwrap()
    }

    fn uniform_unc(h: usize, w: usize, v: f64) -> UncertaintyMap {
        UncertaintyMap::from_grid(Grid2D::filled(h, w, v).unwrap()).unwrap()
    }

    #[test]
    fn binary_probabilities_have_zero_entropy() {
        let counts = Grid2D::from_vec(1, 4, vec![0u32, 8, 8, 0]).unwrap();
        let p = ProbabilisticInstanceMap::from_counts(1, 4, 8, vec![counts]).unwrap();
        let (per, combined) = entropy_map(&p);
        assert!(per[0].grid().iter().all(|&v| v == 0.0));
        assert!(combined.grid().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_probability_gives_ln2() {
        let counts = Grid2D::from_vec(1, 1, vec![4u32]).unwrap();
        let p = ProbabilisticInstanceMap::from_counts(1, 1, 8, vec![counts]).unwrap();
        let (_, combined) = entropy_map(&p);
        assert_abs_diff_eq!(combined.get(0, 0), std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn combined_is_maximum_over_instances() {
        // 7/8 on one instance, 1/8 on another at the same pixel
        let a = Grid2D::from_vec(1, 1, vec![7u32]).unwrap();
        let b = Grid2D::from_vec(1, 1, vec![1u32]).unwrap();
        let p = ProbabilisticInstanceMap::from_counts(1, 1, 8, vec![a, b]).unwrap();
        let (per, combined) = entropy_map(&p);
        let expected = 0.3767701612564368; // H(1/8) = H(7/8)
        assert_abs_diff_eq!(per[0].get(0, 0), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(per[1].get(0, 0), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(combined.get(0, 0), expected, epsilon = 1e-12);
        let (_, summed) = entropy_map_with(&p, CombineMode::Sum);
        assert_abs_diff_eq!(summed.get(0, 0), 2.0 * expected, epsilon = 1e-12);
    }

    #[test]
    fn combined_entropy_within_bernoulli_bound() {
        let a = Grid2D::from_vec(1, 5, vec![0u32, 1, 3, 4, 8]).unwrap();
        let b = Grid2D::from_vec(1, 5, vec![8u32, 7, 4, 2, 0]).unwrap();
        let p = ProbabilisticInstanceMap::from_counts(1, 5, 8, vec![a, b]).unwrap();
        let (_, combined) = entropy_map(&p);
        for &v in combined.grid().iter() {
            assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn perfect_prediction_all_accurate_certain() {
        let gt = masks_1xn(8, &[&[0, 1, 2], &[5, 6]]);
        let unc = uniform_unc(1, 8, 0.0);
        let counts = patch_counts(&gt, &gt, &unc, 4, 0.5, 0.1).unwrap();
        assert_eq!(counts.accurate_certain, 2); // both 1x4 patches touch fg
        assert_eq!(counts.total(), 2);
    }

    #[test]
    fn all_wrong_and_uncertain() {
        let pred = masks_1xn(4, &[&[0, 1]]);
        let gt = masks_1xn(4, &[&[2, 3]]);
        let unc = uniform_unc(1, 4, std::f64::consts::LN_2);
        let counts = patch_counts(&pred, &gt, &unc, 4, 0.5, 0.1).unwrap();
        assert_eq!(counts.inaccurate_uncertain, 1);
        assert_eq!(counts.total(), 1);
    }

    #[test]
    fn hand_built_8x8_scene() {
        // patch (0,0): perfect instance; patches (0,1) and (1,0): matching
        // single-pixel instances; patch (1,1): a spurious prediction only.
        let full_patch = |r0: usize, c0: usize| {
            let mut m = Mask::filled(8, 8, false).unwrap();
            for r in r0..r0 + 4 {
                for c in c0..c0 + 4 {
                    m.set(r, c, true);
                }
            }
            m
        };
        let single = |r: usize, c: usize| {
            let mut m = Mask::filled(8, 8, false).unwrap();
            m.set(r, c, true);
            m
        };
        let gt = InstanceMasks::with_masks(
            8,
            8,
            vec![full_patch(0, 0), single(1, 5), single(5, 1)],
        )
        .unwrap();
        let pred = InstanceMasks::with_masks(
            8,
            8,
            vec![full_patch(0, 0), single(1, 5), single(5, 1), full_patch(4, 4)],
        )
        .unwrap();
        let unc = uniform_unc(8, 8, 0.0);
        let counts = patch_counts(&pred, &gt, &unc, 4, 0.5, 0.05).unwrap();
        assert_eq!(counts.accurate_certain, 3);
        assert_eq!(counts.inaccurate_certain, 1);
        let probs = conditional_probs(&counts);
        assert_eq!(probs.uncertain_given_inaccurate, Some(0.0));
    }

    #[test]
    fn conditional_probs_hand_values() {
        let c = PatchCounts {
            accurate_certain: 6,
            accurate_uncertain: 1,
            inaccurate_certain: 2,
            inaccurate_uncertain: 3,
        };
        let p = conditional_probs(&c);
        assert_eq!(p.accurate_given_certain, Some(0.75));
        assert_eq!(p.uncertain_given_inaccurate, Some(0.6));
        assert_eq!(p.pavpu, Some(0.75));
    }

    #[test]
    fn conditional_probs_undefined_cases() {
        let all_ac = PatchCounts {
            accurate_certain: 10,
            accurate_uncertain: 0,
            inaccurate_certain: 0,
            inaccurate_uncertain: 0,
        };
        let p = conditional_probs(&all_ac);
        assert_eq!(p.accurate_given_certain, Some(1.0));
        assert_eq!(p.uncertain_given_inaccurate, None);
        assert_eq!(p.pavpu, Some(1.0));

        let no_certain = PatchCounts {
            accurate_certain: 0,
            accurate_uncertain: 0,
            inaccurate_certain: 5,
            inaccurate_uncertain: 5,
        };
        let q = conditional_probs(&no_certain);
        assert_eq!(q.accurate_given_certain, Some(0.0));
        assert_eq!(q.uncertain_given_inaccurate, Some(0.5));
        assert_eq!(q.pavpu, Some(0.5));

        let empty = PatchCounts {
            accurate_certain: 0,
            accurate_uncertain: 0,
            inaccurate_certain: 0,
            inaccurate_uncertain: 0,
        };
        let r = conditional_probs(&empty);
        assert_eq!(r.accurate_given_certain, None);
        assert_eq!(r.pavpu, None);
    }

    #[test]
    fn curve_extremes() {
        let pred = masks_1xn(8, &[&[0, 1, 2, 3]]);
        let gt = masks_1xn(8, &[&[0, 1], &[6, 7]]);
        let mut g = Grid2D::filled(1, 8, 0.0).unwrap();
        g.set(0, 1, 0.4);
        g.set(0, 6, 0.2);
        let unc = UncertaintyMap::from_grid(g).unwrap();
        let curve =
            uncertainty_curves(&pred, &gt, &unc, 4, 0.5, &[0.0, 0.8]).unwrap();
        // threshold 0: every patch uncertain
        assert_eq!(curve.points[0].uncertain_given_inaccurate, Some(1.0));
        // threshold above ln 2: no patch uncertain
        assert_eq!(curve.points[1].uncertain_given_inaccurate, Some(0.0));
    }

    #[test]
    fn counts_partition_is_threshold_invariant() {
        let pred = masks_1xn(12, &[&[0, 1, 2], &[8, 9]]);
        let gt = masks_1xn(12, &[&[0, 1], &[8, 9, 10]]);
        let mut g = Grid2D::filled(1, 12, 0.0).unwrap();
        for (i, v) in [0.1, 0.3, 0.5, 0.2].iter().enumerate() {
            g.set(0, i * 3, *v);
        }
        let unc = UncertaintyMap::from_grid(g).unwrap();
        let stats = patch_stats(&pred, &gt, &unc, 4).unwrap();
        let totals: Vec<usize> = [0.0, 0.1, 0.3, 0.9]
            .iter()
            .map(|&t| counts_from_stats(&stats, 0.5, t).total())
            .collect();
        assert!(totals.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn uncertain_given_inaccurate_non_increasing_in_threshold() {
        let pred = masks_1xn(16, &[&[0, 1, 2, 3], &[9, 10]]);
        let gt = masks_1xn(16, &[&[0, 1], &[9, 10, 11], &[14, 15]]);
        let mut g = Grid2D::filled(1, 16, 0.0).unwrap();
        for i in 0..16 {
            g.set(0, i, (i as f64 * 0.61).sin().abs() * 0.6);
        }
        let unc = UncertaintyMap::from_grid(g).unwrap();
        let thresholds: Vec<f64> = (0..14).map(|i| i as f64 * 0.05).collect();
        let curve = uncertainty_curves(&pred, &gt, &unc, 4, 0.5, &thresholds).unwrap();
        let mut prev = f64::INFINITY;
        for pt in &curve.points {
            let v = pt.uncertain_given_inaccurate.unwrap();
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn scaling_entropy_and_thresholds_preserves_counts() {
        let pred = masks_1xn(8, &[&[0, 1, 2]]);
        let gt = masks_1xn(8, &[&[0, 1], &[5, 6]]);
        let mut g = Grid2D::filled(1, 8, 0.0).unwrap();
        for i in 0..8 {
            g.set(0, i, 0.05 * i as f64);
        }
        let unc = UncertaintyMap::from_grid(g.clone()).unwrap();
        let scaled = UncertaintyMap::from_grid(g.map(|&v| 3.0 * v)).unwrap();
        for t in [0.05, 0.1, 0.2] {
            let a = patch_counts(&pred, &gt, &unc, 4, 0.5, t).unwrap();
            let b = patch_counts(&pred, &gt, &scaled, 4, 0.5, 3.0 * t).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_zero_patch_size() {
        let gt = masks_1xn(4, &[&[0]]);
        let unc = uniform_unc(1, 4, 0.0);
        assert!(patch_counts(&gt, &gt, &unc, 0, 0.5, 0.1).is_err());
    }
}
