//! Fusing posterior draws of instance masks into per-instance pixel
//! probabilities.
//!
//! The draw with the most instances seeds one accumulator track per
//! instance. Every further draw is matched to the current tracks by
//! IoU-maximizing assignment; matched masks are added to their track's
//! count grid and unioned into its base mask, unmatched draw instances
//! open new tracks. Final probabilities are counts divided by the number
//! of draws.

use crate::error::{Error, Result};
use crate::grid::{Grid2D, Mask};
use crate::mask::{iou, InstanceMasks};
use crate::maps::ProbabilisticInstanceMap;

/// A set of posterior draws over a common grid.
#[derive(Debug, Clone)]
pub struct DrawSet {
    height: usize,
    width: usize,
    draws: Vec<InstanceMasks>,
}

impl DrawSet {
    pub fn new(draws: Vec<InstanceMasks>) -> Result<Self> {
        let first = draws.first().ok_or(Error::EmptyInput("draws"))?;
        let (height, width) = first.shape();
        for d in &draws {
            if d.shape() != (height, width) {
                return Err(Error::ShapeMismatch {
                    expected: (height, width),
                    actual: d.shape(),
                });
            }
        }
        Ok(Self {
            height,
            width,
            draws,
        })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one draw
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, t: usize) -> &InstanceMasks {
        &self.draws[t]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, InstanceMasks> {
        self.draws.iter()
    }
}

/// IoU of every instance pair; entry (i, j) = iou(a_i, b_j).
pub fn pairwise_iou_matrix(a: &InstanceMasks, b: &InstanceMasks) -> Result<Vec<Vec<f64>>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            actual: b.shape(),
        });
    }
    let mut out = Vec::with_capacity(a.len());
    for ma in a.iter() {
        let mut row = Vec::with_capacity(b.len());
        for mb in b.iter() {
            row.push(iou(ma, mb).expect("shapes checked"));
        }
        out.push(row);
    }
    Ok(out)
}

/// One-to-one partial assignment of matrix rows to columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Matched (row, col) pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
    /// Sum of the matrix entries over `pairs`.
    pub total: f64,
}

/// Maximum-total-value assignment of rows to columns for a rectangular
/// matrix of finite non-negative values. Pairs whose entry is exactly 0 are
/// discarded: a zero-value match carries no information and must not tie
/// masks together.
pub fn hungarian_max(values: &[Vec<f64>]) -> Assignment {
    let n_rows = values.len();
    let n_cols = values.first().map_or(0, |r| r.len());
    if n_rows == 0 || n_cols == 0 {
        return Assignment {
            pairs: Vec::new(),
            unmatched_rows: (0..n_rows).collect(),
            unmatched_cols: (0..n_cols).collect(),
            total: 0.0,
        };
    }
    for row in values {
        assert_eq!(row.len(), n_cols, "cost matrix must be rectangular");
        assert!(row.iter().all(|v| v.is_finite()), "cost entries must be finite");
    }

    // Maximize by minimizing (max_entry - value); with non-negative entries
    // a full-size matching is always among the optima, so forcing every row
    // (or column) to match loses nothing once zero pairs are dropped.
    let max_entry = values
        .iter()
        .flat_map(|r| r.iter().copied())
        .fold(0.0f64, f64::max);
    let transposed = n_rows > n_cols;
    let (n, m) = if transposed {
        (n_cols, n_rows)
    } else {
        (n_rows, n_cols)
    };
    let cost = |i: usize, j: usize| -> f64 {
        let v = if transposed { values[j][i] } else { values[i][j] };
        max_entry - v
    };

    // Potential-based shortest augmenting path assignment, O(n^2 m).
    const INF: f64 = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut matched_row = vec![0usize; m + 1]; // 1-based row matched to col j
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs = Vec::new();
    for (j, &i) in matched_row.iter().enumerate().skip(1) {
        if i == 0 {
            continue;
        }
        let (row, col) = if transposed { (j - 1, i - 1) } else { (i - 1, j - 1) };
        if values[row][col] > 0.0 {
            pairs.push((row, col));
        }
    }
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(r, c)| values[r][c]).sum();
    let in_pairs_row: Vec<bool> = {
        let mut v = vec![false; n_rows];
        for &(r, _) in &pairs {
            v[r] = true;
        }
        v
    };
    let in_pairs_col: Vec<bool> = {
        let mut v = vec![false; n_cols];
        for &(_, c) in &pairs {
            v[c] = true;
        }
        v
    };
    Assignment {
        pairs,
        unmatched_rows: (0..n_rows).filter(|&r| !in_pairs_row[r]).collect(),
        unmatched_cols: (0..n_cols).filter(|&c| !in_pairs_col[c]).collect(),
        total,
    }
}

struct Track {
    base: Mask,
    counts: Grid2D<u32>,
}

impl Track {
    fn open(mask: &Mask) -> Self {
        Self {
            base: mask.clone(),
            counts: mask.map(|&b| u32::from(b)),
        }
    }

    fn absorb(&mut self, mask: &Mask) {
        for (acc, &b) in self.counts.as_mut_slice().iter_mut().zip(mask.iter()) {
            *acc += u32::from(b);
        }
        self.base.union_with(mask);
    }
}

/// Fuse all draws into one probability map per tracked instance.
///
/// The base draw is the one with the most instances (lowest index on ties).
/// Draw instances left unmatched, or matched only at IoU 0, open new tracks;
/// without that rule instances absent from the base draw would be lost.
pub fn agglomerate_draws(set: &DrawSet) -> ProbabilisticInstanceMap {
    let t_draws = set.len() as u32;
    let base_idx = (0..set.len())
        .max_by(|&a, &b| {
            set.get(a)
                .len()
                .cmp(&set.get(b).len())
                .then(b.cmp(&a)) // prefer the lower index on ties
        })
        .expect("draw set is nonempty");

    let mut tracks: Vec<Track> = set.get(base_idx).iter().map(Track::open).collect();

    for (t, draw) in set.iter().enumerate() {
        if t == base_idx || draw.is_empty() {
            continue;
        }
        if tracks.is_empty() {
            tracks.extend(draw.iter().map(Track::open));
            continue;
        }
        let bases = InstanceMasks::with_masks(
            set.height,
            set.width,
            tracks.iter().map(|tr| tr.base.clone()).collect(),
        )
        .expect("track bases share the draw shape");
        let matrix = pairwise_iou_matrix(&bases, draw).expect("shapes agree");
        let assignment = hungarian_max(&matrix);
        for &(track_idx, draw_idx) in &assignment.pairs {
            tracks[track_idx].absorb(draw.get(draw_idx));
        }
        for &draw_idx in &assignment.unmatched_cols {
            tracks.push(Track::open(draw.get(draw_idx)));
        }
    }

    ProbabilisticInstanceMap::from_counts(
        set.height,
        set.width,
        t_draws,
        tracks.into_iter().map(|tr| tr.counts).collect(),
    )
    .expect("counts are bounded by the number of draws")
}

/// Threshold probability maps back to binary masks: a pixel belongs to the
/// instance iff its probability is >= theta (inclusive boundary). Instances
/// left with no pixels are dropped.
pub fn binarize(p: &ProbabilisticInstanceMap, theta: f64) -> Result<InstanceMasks> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::OutOfRange {
            name: "theta",
            value: theta,
        });
    }
    let (h, w) = p.shape();
    let t = p.n_draws() as f64;
    let mut out = InstanceMasks::new(h, w)?;
    for i in 0..p.n_instances() {
        let mask = p.counts(i).map(|&k| k as f64 / t >= theta);
        out.push(mask)?;
    }
    Ok(out)
}
