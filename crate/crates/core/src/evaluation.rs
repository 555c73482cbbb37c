//! Instance-segmentation benchmark metrics: average precision over an IoU
//! threshold sweep, the counting AP variant TP/(TP+FP+FN), and recall at
//! IoU 0.8.

use serde::{Deserialize, Serialize};

use crate::agglomeration::{binarize, hungarian_max, pairwise_iou_matrix};
use crate::error::{Error, Result};
use crate::mask::InstanceMasks;
use crate::maps::ProbabilisticInstanceMap;

/// The evaluation sweep 0.50, 0.55, ..., 0.95.
pub const IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Predicted instances with per-instance confidence scores in [0, 1].
#[derive(Debug, Clone)]
pub struct ScoredPrediction {
    pub masks: InstanceMasks,
    pub scores: Vec<f64>,
}

impl ScoredPrediction {
    pub fn new(masks: InstanceMasks, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != masks.len() {
            return Err(Error::invalid_param(
                "scores",
                format!("{} scores for {} masks", scores.len(), masks.len()),
            ));
        }
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::invalid_param("scores", "scores must lie in [0, 1]"));
        }
        Ok(Self { masks, scores })
    }

    /// Deterministic predictions carry score 1.0.
    pub fn uniform(masks: InstanceMasks) -> Self {
        let scores = vec![1.0; masks.len()];
        Self { masks, scores }
    }

    /// Binarize an agglomerated probability map; each surviving instance is
    /// scored by its mean pixel probability over the binarized support.
    pub fn from_probabilistic(p: &ProbabilisticInstanceMap, theta: f64) -> Result<Self> {
        let masks = binarize(p, theta)?;
        // binarize drops empty instances; recover which survived by support
        let t = p.n_draws() as f64;
        let mut scores = Vec::with_capacity(masks.len());
        let mut mask_iter = 0usize;
        for i in 0..p.n_instances() {
            let counts = p.counts(i);
            let support: Vec<u32> = counts
                .iter()
                .copied()
                .filter(|&k| k as f64 / t >= theta)
                .collect();
            if support.is_empty() {
                continue;
            }
            let mean =
                support.iter().map(|&k| k as f64 / t).sum::<f64>() / support.len() as f64;
            scores.push(mean);
            mask_iter += 1;
        }
        debug_assert_eq!(mask_iter, masks.len());
        Self::new(masks, scores)
    }
}

/// Outcome of matching predictions to ground truth at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    /// Unmatched ground-truth instances (false negatives).
    pub missed: usize,
    /// Matched (pred, gt, iou) triples.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// One-to-one matching at an IoU threshold.
///
/// Among matchings restricted to pairs with IoU >= the threshold, the one
/// with the most pairs is chosen, with total IoU as the tie-break. That
/// makes the TP count a well-defined quantity rather than an accident of
/// which maximum-IoU matching the solver returns.
pub fn match_at_iou(
    pred: &InstanceMasks,
    gt: &InstanceMasks,
    iou_threshold: f64,
) -> Result<MatchCounts> {
    let matrix = pairwise_iou_matrix(pred, gt)?;
    match_with_matrix(&matrix, pred.len(), gt.len(), iou_threshold)
}

fn match_with_matrix(
    iou_matrix: &[Vec<f64>],
    n_pred: usize,
    n_gt: usize,
    iou_threshold: f64,
) -> Result<MatchCounts> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::OutOfRange {
            name: "iou_threshold",
            value: iou_threshold,
        });
    }
    // A per-pair bonus larger than any achievable total IoU makes pair
    // count dominate; within equal counts the IoU sum still decides.
    let bonus = n_pred.min(n_gt) as f64 + 1.0;
    let weighted: Vec<Vec<f64>> = iou_matrix
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| if v >= iou_threshold { v + bonus } else { 0.0 })
                .collect()
        })
        .collect();
    let asg = hungarian_max(&weighted);
    let pairs: Vec<(usize, usize, f64)> = asg
        .pairs
        .iter()
        .map(|&(p, g)| (p, g, iou_matrix[p][g]))
        .collect();
    let tp = pairs.len();
    Ok(MatchCounts {
        tp,
        fp: n_pred - tp,
        missed: n_gt - tp,
        pairs,
    })
}

/// Metrics at a single IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub iou_threshold: f64,
    /// Score-swept average precision (area under the precision-recall curve,
    /// greedy max-IoU matching per score group).
    pub ap: f64,
    /// Counting variant TP/(TP+FP+FN) over all predictions, one-to-one
    /// assignment matching.
    pub ap_dsb: f64,
    pub tp: usize,
    pub fp: usize,
    pub missed: usize,
}

/// The benchmark report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub av_ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub recall80: f64,
    pub av_ap_dsb: f64,
    pub per_threshold: Vec<ThresholdMetrics>,
    /// Number of images contributing to the averages.
    pub images: usize,
}

/// Greedy score-ordered matching for the precision-recall sweep.
///
/// Predictions with the same score cannot be separated by any confidence
/// threshold, so they enter as one group and contribute a single PR point.
/// Within a group each prediction greedily claims the unclaimed ground
/// truth of highest IoU >= the threshold.
fn swept_ap(iou_matrix: &[Vec<f64>], scores: &[f64], n_gt: usize, iou_threshold: f64) -> f64 {
    let n_pred = scores.len();
    if n_pred == 0 || n_gt == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..n_pred).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut gt_used = vec![false; n_gt];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::new(); // (recall, precision)
    let mut i = 0;
    while i < n_pred {
        let mut j = i;
        while j < n_pred && scores[order[j]] == scores[order[i]] {
            let p = order[j];
            let mut best: Option<(usize, f64)> = None;
            for (g, used) in gt_used.iter().enumerate() {
                if *used {
                    continue;
                }
                let v = iou_matrix[p][g];
                if v >= iou_threshold && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, _)) => {
                    gt_used[g] = true;
                    tp += 1;
                }
                None => fp += 1,
            }
            j += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64));
        i = j;
    }

    // precision envelope from the right, then all-point area
    let mut envelope = points.clone();
    let mut running = 0.0f64;
    for pt in envelope.iter_mut().rev() {
        running = running.max(pt.1);
        pt.1 = running;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &(recall, precision) in &envelope {
        if recall > prev_recall {
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    ap
}

/// Evaluate one image. Ground truth must contain at least one instance.
pub fn evaluate_image(pred: &ScoredPrediction, gt: &InstanceMasks) -> Result<MetricReport> {
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let matrix = pairwise_iou_matrix(&pred.masks, gt)?;
    let mut per_threshold = Vec::with_capacity(IOU_THRESHOLDS.len());
    let mut recall80 = 0.0;
    for &thr in IOU_THRESHOLDS.iter() {
        let counts = match_with_matrix(&matrix, pred.masks.len(), gt.len(), thr)?;
        let ap = swept_ap(&matrix, &pred.scores, gt.len(), thr);
        let ap_dsb = counts.tp as f64 / (counts.tp + counts.fp + counts.missed) as f64;
        if thr == 0.80 {
            recall80 = counts.tp as f64 / gt.len() as f64;
        }
        per_threshold.push(ThresholdMetrics {
            iou_threshold: thr,
            ap,
            ap_dsb,
            tp: counts.tp,
            fp: counts.fp,
            missed: counts.missed,
        });
    }
    let n = per_threshold.len() as f64;
    let av_ap = per_threshold.iter().map(|t| t.ap).sum::<f64>() / n;
    let av_ap_dsb = per_threshold.iter().map(|t| t.ap_dsb).sum::<f64>() / n;
    Ok(MetricReport {
        av_ap,
        ap50: per_threshold[0].ap,
        ap75: per_threshold[5].ap,
        recall80,
        av_ap_dsb,
        per_threshold,
        images: 1,
    })
}

/// Evaluate a dataset by averaging per-image metrics. Images without ground
/// truth are skipped; the number of skipped images is returned alongside.
pub fn evaluate_dataset(
    samples: &[(ScoredPrediction, InstanceMasks)],
) -> Result<(MetricReport, usize)> {
    let mut reports = Vec::new();
    let mut skipped = 0usize;
    for (pred, gt) in samples {
        if gt.is_empty() {
            skipped += 1;
            continue;
        }
        reports.push(evaluate_image(pred, gt)?);
    }
    if reports.is_empty() {
        return Err(Error::EmptyInput("no images with ground truth instances"));
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let per_threshold = (0..IOU_THRESHOLDS.len())
        .map(|i| ThresholdMetrics {
            iou_threshold: IOU_THRESHOLDS[i],
            ap: reports.iter().map(|r| r.per_threshold[i].ap).sum::<f64>() / n,
            ap_dsb: reports.iter().map(|r| r.per_threshold[i].ap_dsb).sum::<f64>() / n,
            tp: reports.iter().map(|r| r.per_threshold[i].tp).sum(),
            fp: reports.iter().map(|r| r.per_threshold[i].fp).sum(),
            missed: reports.iter().map(|r| r.per_threshold[i].missed).sum(),
        })
        .collect();
    Ok((
        MetricReport {
            av_ap: mean(&|r| r.av_ap),
            ap50: mean(&|r| r.ap50),
            ap75: mean(&|r| r.ap75),
            recall80: mean(&|r| r.recall80),
            av_ap_dsb: mean(&|r| r.av_ap_dsb),
            per_threshold,
            images: reports.len(),
        },
        skipped,
    ))
}

/// Fixed-width text table with the benchmark columns.
pub fn format_report_table(rows: &[(String, &MetricReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>12} {:>8} {:>8} {:>10} {:>12}\n",
        "", "avAP[.5:.95]", "AP.5", "AP.75", "Recall.8", "avAP_dsb"
    ));
    for (label, r) in rows {
        out.push_str(&format!(
            "{:<24} {:>12.3} {:>8.3} {:>8.3} {:>10.3} {:>12.3}\n",
            label, r.av_ap, r.ap50, r.ap75, r.recall80, r.av_ap_dsb
        ));
    }
    out
}
