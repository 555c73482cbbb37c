//! Per-instance binary masks and elementary mask algebra.

use crate::error::{Error, Result};
use crate::grid::{Grid2D, Mask};

/// An ordered set of per-instance binary masks over a common grid.
///
/// Masks may overlap (two instances can claim the same pixel). Empty masks
/// are dropped at construction, so every stored mask has at least one
/// foreground pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMasks {
    height: usize,
    width: usize,
    masks: Vec<Mask>,
}

impl InstanceMasks {
    /// Empty set over the given grid.
    pub fn new(height: usize, width: usize) -> Result<Self> {
        // Reuse Grid2D's dimension validation.
        let _probe = Mask::filled(height, width, false)?;
        Ok(Self {
            height,
            width,
            masks: Vec::new(),
        })
    }

    /// Build from a list of masks; empty masks are dropped.
    pub fn with_masks(height: usize, width: usize, masks: Vec<Mask>) -> Result<Self> {
        let mut out = Self::new(height, width)?;
        for m in masks {
            out.push(m)?;
        }
        Ok(out)
    }

    /// Append a mask. Empty masks are silently dropped; a shape mismatch is
    /// an error.
    pub fn push(&mut self, mask: Mask) -> Result<()> {
        if mask.shape() != (self.height, self.width) {
            return Err(Error::ShapeMismatch {
                expected: (self.height, self.width),
                actual: mask.shape(),
            });
        }
        if mask.any() {
            self.masks.push(mask);
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn get(&self, i: usize) -> &Mask {
        &self.masks[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Mask> {
        self.masks.iter()
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    /// Union of all instance masks.
    pub fn foreground(&self) -> Mask {
        let mut fg = Mask::filled(self.height, self.width, false).expect("valid shape");
        for m in &self.masks {
            fg.union_with(m);
        }
        fg
    }

    /// Render to a flat label map (1-based ids in mask order).
    ///
    /// Fails if any pixel is claimed by more than one instance.
    pub fn to_labelmap(&self) -> Result<Grid2D<u32>> {
        let mut labels = Grid2D::filled(self.height, self.width, 0u32)?;
        for (i, m) in self.masks.iter().enumerate() {
            for (l, &v) in labels.as_mut_slice().iter_mut().zip(m.iter()) {
                if v {
                    if *l != 0 {
                        return Err(Error::OverlappingMasks);
                    }
                    *l = (i + 1) as u32;
                }
            }
        }
        Ok(labels)
    }
}

/// Intersection-over-union of two same-shape binary masks.
///
/// Two empty masks yield 0 (avoids 0/0; stored `InstanceMasks` never contain
/// empty masks, so this only matters for raw mask arithmetic).
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            actual: b.shape(),
        });
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b.iter()) {
        if x && y {
            inter += 1;
        }
        if x || y {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// One binary mask per distinct nonzero id, ordered by ascending id.
pub fn masks_from_labelmap(labels: &Grid2D<u32>) -> InstanceMasks {
    let (h, w) = labels.shape();
    let mut ids: Vec<u32> = labels.iter().copied().filter(|&v| v != 0).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut out = InstanceMasks::new(h, w).expect("labels grid has valid shape");
    for id in ids {
        let mask = labels.map(|&v| v == id);
        out.push(mask).expect("same shape");
    }
    out
}

/// Pixel connectivity for component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

/// Label connected foreground components 1..K in row-major first-encounter
/// order; background stays 0.
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> Grid2D<u32> {
    let (h, w) = mask.shape();
    let mut labels = Grid2D::filled(h, w, 0u32).expect("valid shape");
    let mut next = 0u32;
    let mut queue: Vec<(usize, usize)> = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if !*mask.get(row, col) || *labels.get(row, col) != 0 {
                continue;
            }
            next += 1;
            labels.set(row, col, next);
            queue.clear();
            queue.push((row, col));
            while let Some((r, c)) = queue.pop() {
                for &(dr, dc) in connectivity.offsets() {
                    let nr = r as i64 + dr;
                    let nc = c as i64 + dc;
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if *mask.get(nr, nc) && *labels.get(nr, nc) == 0 {
                        labels.set(nr, nc, next);
                        queue.push((nr, nc));
                    }
                }
            }
        }
    }
    labels
}
