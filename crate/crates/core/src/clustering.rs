//! Embedding-space clustering: mean-shift mode finding, threshold
//! assignment of pixels to modes, and the overlap-resolution heuristic
//! that reconstructs overlapping instances from the overlap class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::mask::{connected_components, iou, Connectivity, InstanceMasks};
use crate::maps::{EmbeddingMap, SemanticMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// Uniform weight within the bandwidth.
    Flat,
    /// Gaussian weight over all points, scale = bandwidth.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanShiftConfig {
    /// Kernel radius in embedding space.
    pub bandwidth: f64,
    /// A pixel joins an instance iff its embedding lies within this distance
    /// of the instance's mode.
    pub cluster_threshold: f64,
    pub max_iterations: usize,
    /// Iteration stops once the shift falls below this.
    pub convergence_tol: f64,
    /// Converged trajectory endpoints closer than this merge into one mode.
    pub mode_merge_dist: f64,
    pub kernel: Kernel,
    /// Every n-th foreground point seeds a trajectory.
    pub seed_stride: usize,
}

impl Default for MeanShiftConfig {
    fn default() -> Self {
        Self::with_bandwidth(2.0)
    }
}

impl MeanShiftConfig {
    /// Defaults derived from the bandwidth: threshold = bandwidth,
    /// tolerance = 1e-3 * bandwidth, merge distance = bandwidth / 2.
    pub fn with_bandwidth(bandwidth: f64) -> Self {
        Self {
            bandwidth,
            cluster_threshold: bandwidth,
            max_iterations: 100,
            convergence_tol: 1e-3 * bandwidth,
            mode_merge_dist: bandwidth / 2.0,
            kernel: Kernel::Flat,
            seed_stride: 4,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bandwidth", self.bandwidth),
            ("cluster_threshold", self.cluster_threshold),
            ("convergence_tol", self.convergence_tol),
            ("mode_merge_dist", self.mode_merge_dist),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::OutOfRange { name, value: v });
            }
        }
        if self.seed_stride == 0 {
            return Err(Error::invalid_param("seed_stride", "must be >= 1"));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Find density modes by mean-shift.
///
/// Seeds are every `seed_stride`-th point in input order; each trajectory
/// iterates to convergence, then endpoints closer than `mode_merge_dist`
/// are merged into a single mode weighted by basin size. Modes come out
/// ordered by descending basin weight, which makes the result deterministic
/// for a fixed input order; permuting the input can reorder modes but the
/// mode set itself is stable within the convergence tolerance.
pub fn mean_shift_modes(points: &[Vec<f64>], cfg: &MeanShiftConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid_param("points", "inconsistent dimensionality"));
    }

    let bw2 = cfg.bandwidth * cfg.bandwidth;
    let tol2 = cfg.convergence_tol * cfg.convergence_tol;

    // (endpoint, basin weight, seed order)
    let mut endpoints: Vec<(Vec<f64>, f64, usize)> = Vec::new();
    for (order, seed_idx) in (0..points.len()).step_by(cfg.seed_stride).enumerate() {
        let mut y = points[seed_idx].clone();
        for _ in 0..cfg.max_iterations {
            let mut mean = vec![0.0; dim];
            let mut weight = 0.0;
            match cfg.kernel {
                Kernel::Flat => {
                    for p in points {
                        if sq_dist(&y, p) <= bw2 {
                            for (m, &v) in mean.iter_mut().zip(p) {
                                *m += v;
                            }
                            weight += 1.0;
                        }
                    }
                }
                Kernel::Gaussian => {
                    for p in points {
                        let w = (-sq_dist(&y, p) / (2.0 * bw2)).exp();
                        for (m, &v) in mean.iter_mut().zip(p) {
                            *m += w * v;
                        }
                        weight += w;
                    }
                }
            }
            if weight <= 0.0 {
                break;
            }
            for m in mean.iter_mut() {
                *m /= weight;
            }
            let shift2 = sq_dist(&y, &mean);
            y = mean;
            if shift2 <= tol2 {
                break;
            }
        }
        let basin = match cfg.kernel {
            Kernel::Flat => points.iter().filter(|p| sq_dist(&y, p) <= bw2).count() as f64,
            Kernel::Gaussian => points
                .iter()
                .map(|p| (-sq_dist(&y, p) / (2.0 * bw2)).exp())
                .sum(),
        };
        endpoints.push((y, basin, order));
    }

    // Heaviest basin first; seed order breaks ties.
    endpoints.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));

    let merge2 = cfg.mode_merge_dist * cfg.mode_merge_dist;
    // groups: (representative endpoint, weighted sum, total weight)
    let mut groups: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    for (y, weight, _) in endpoints {
        let mut joined = false;
        for (rep, sum, total) in groups.iter_mut() {
            if sq_dist(rep, &y) <= merge2 {
                for (s, &v) in sum.iter_mut().zip(&y) {
                    *s += weight * v;
                }
                *total += weight;
                joined = true;
                break;
            }
        }
        if !joined {
            let sum = y.iter().map(|&v| v * weight).collect();
            groups.push((y, sum, weight));
        }
    }

    Ok(groups
        .into_iter()
        .map(|(_, sum, total)| sum.into_iter().map(|v| v / total).collect())
        .collect())
}

/// Gather pixels into instances: a non-background pixel joins the nearest
/// mode within `cluster_threshold`; on exact distance ties the lower-index
/// mode wins; pixels farther than the threshold from every mode stay
/// unassigned. Modes that capture no pixel produce no mask.
pub fn assign_instances(
    emb: &EmbeddingMap,
    sem: &SemanticMap,
    modes: &[Vec<f64>],
    cfg: &MeanShiftConfig,
) -> Result<InstanceMasks> {
    cfg.validate()?;
    if emb.shape() != sem.shape() {
        return Err(Error::ShapeMismatch {
            expected: emb.shape(),
            actual: sem.shape(),
        });
    }
    let (h, w) = emb.shape();
    if modes.iter().any(|m| m.len() != emb.dim()) {
        return Err(Error::invalid_param(
            "modes",
            "mode dimensionality does not match the embedding map",
        ));
    }
    let thr2 = cfg.cluster_threshold * cfg.cluster_threshold;
    let mut masks: Vec<Mask> = (0..modes.len())
        .map(|_| Mask::filled(h, w, false).expect("valid shape"))
        .collect();
    for row in 0..h {
        for col in 0..w {
            if !sem.is_foreground(row, col) {
                continue;
            }
            let e = emb.vector(row, col);
            let mut best: Option<(usize, f64)> = None;
            for (k, mode) in modes.iter().enumerate() {
                let d2 = sq_dist(e, mode);
                if d2 <= thr2 && best.is_none_or(|(_, bd)| d2 < bd) {
                    best = Some((k, d2));
                }
            }
            if let Some((k, _)) = best {
                masks[k].set(row, col, true);
            }
        }
    }
    InstanceMasks::with_masks(h, w, masks)
}

/// Reconstruct overlapping instances from the overlap class.
///
/// The overlap map (overlap-class probability >= `overlap_threshold`) is
/// unioned into every instance mask; of the resulting connected components
/// (8-connectivity) only the one with the highest IoU against the original
/// sole mask survives.
pub fn resolve_overlaps(
    masks: &InstanceMasks,
    sem: &SemanticMap,
    overlap_threshold: f64,
) -> Result<InstanceMasks> {
    if masks.shape() != sem.shape() {
        return Err(Error::ShapeMismatch {
            expected: masks.shape(),
            actual: sem.shape(),
        });
    }
    let (h, w) = masks.shape();
    let mut overlap = Mask::filled(h, w, false)?;
    let mut any_overlap = false;
    for row in 0..h {
        for col in 0..w {
            if sem.probs_at(row, col)[2] >= overlap_threshold {
                overlap.set(row, col, true);
                any_overlap = true;
            }
        }
    }
    if !any_overlap {
        return Ok(masks.clone());
    }

    let mut out = InstanceMasks::new(h, w)?;
    for sole in masks.iter() {
        let mut grown = sole.clone();
        grown.union_with(&overlap);
        let labels = connected_components(&grown, Connectivity::Eight);
        let n_components = labels.iter().copied().max().unwrap_or(0);
        let mut best: Option<(f64, u32)> = None;
        for comp in 1..=n_components {
            let comp_mask = labels.map(|&l| l == comp);
            let score = iou(&comp_mask, sole)?;
            // strict > keeps the lowest (first-encountered) label on ties
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, comp));
            }
        }
        let (_, keep) = best.expect("grown mask contains the nonempty sole mask");
        out.push(labels.map(|&l| l == keep))?;
    }
    Ok(out)
}

/// Full post-processing of one prediction: mean-shift on foreground
/// embeddings, threshold assignment, overlap resolution. Zero foreground
/// pixels yield an empty instance set.
pub fn segment(
    emb: &EmbeddingMap,
    sem: &SemanticMap,
    cfg: &MeanShiftConfig,
    overlap_threshold: f64,
) -> Result<InstanceMasks> {
    if emb.shape() != sem.shape() {
        return Err(Error::ShapeMismatch {
            expected: emb.shape(),
            actual: sem.shape(),
        });
    }
    let (h, w) = emb.shape();
    let mut points = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if sem.is_foreground(row, col) {
                points.push(emb.vector(row, col).to_vec());
            }
        }
    }
    if points.is_empty() {
        return InstanceMasks::new(h, w);
    }
    let modes = mean_shift_modes(&points, cfg)?;
    let masks = assign_instances(emb, sem, &modes, cfg)?;
    resolve_overlaps(&masks, sem, overlap_threshold)
}
