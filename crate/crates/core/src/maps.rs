//! Per-pixel value maps: embeddings, semantic class probabilities,
//! agglomerated instance probabilities and entropy.

use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// H×W field of D-dimensional embedding vectors, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMap {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMap {
    pub fn zeros(height: usize, width: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid_param("dim", "embedding dimension must be >= 1"));
        }
        let _probe = Grid2D::<u8>::filled(height, width, 0)?;
        Ok(Self {
            height,
            width,
            dim,
            data: vec![0.0; height * width * dim],
        })
    }

    /// Build from pixel-major data (`height * width * dim` values); all
    /// entries must be finite.
    pub fn from_vec(height: usize, width: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        let mut map = Self::zeros(height, width, dim)?;
        if data.len() != height * width * dim {
            return Err(Error::invalid_param(
                "data",
                format!(
                    "length {} does not match {}x{}x{}",
                    data.len(),
                    height,
                    width,
                    dim
                ),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_param("data", "embedding values must be finite"));
        }
        map.data = data;
        Ok(map)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn vector(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.dim;
        &self.data[start..start + self.dim]
    }

    #[inline]
    pub fn vector_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.width + col) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Semantic class of a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SemanticClass {
    Background,
    Foreground,
    Overlap,
}

impl SemanticClass {
    pub fn index(self) -> usize {
        match self {
            SemanticClass::Background => 0,
            SemanticClass::Foreground => 1,
            SemanticClass::Overlap => 2,
        }
    }
}

/// Per-pixel (background, foreground, overlap) probability triples.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    height: usize,
    width: usize,
    probs: Vec<[f64; 3]>,
}

impl SemanticMap {
    const SUM_TOL: f64 = 1e-6;

    pub fn from_probs(height: usize, width: usize, probs: Vec<[f64; 3]>) -> Result<Self> {
        let _probe = Grid2D::<u8>::filled(height, width, 0)?;
        if probs.len() != height * width {
            return Err(Error::invalid_param(
                "probs",
                format!("length {} does not match {}x{}", probs.len(), height, width),
            ));
        }
        for triple in &probs {
            let sum: f64 = triple.iter().sum();
            if triple.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::invalid_param(
                    "probs",
                    "class probabilities must lie in [0, 1]",
                ));
            }
            if (sum - 1.0).abs() > Self::SUM_TOL {
                return Err(Error::invalid_param(
                    "probs",
                    format!("class probabilities must sum to 1, got {sum}"),
                ));
            }
        }
        Ok(Self {
            height,
            width,
            probs,
        })
    }

    /// One-hot map from a class grid.
    pub fn one_hot(classes: &Grid2D<SemanticClass>) -> Self {
        let probs = classes
            .iter()
            .map(|c| {
                let mut t = [0.0; 3];
                t[c.index()] = 1.0;
                t
            })
            .collect();
        Self {
            height: classes.height(),
            width: classes.width(),
            probs,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn probs_at(&self, row: usize, col: usize) -> [f64; 3] {
        self.probs[row * self.width + col]
    }

    /// Argmax class; ties resolve to the lowest class index (background
    /// first), so an exactly ambiguous pixel is treated as background.
    #[inline]
    pub fn class_at(&self, row: usize, col: usize) -> SemanticClass {
        let p = self.probs_at(row, col);
        let mut best = 0;
        for i in 1..3 {
            if p[i] > p[best] {
                best = i;
            }
        }
        match best {
            0 => SemanticClass::Background,
            1 => SemanticClass::Foreground,
            _ => SemanticClass::Overlap,
        }
    }

    pub fn is_foreground(&self, row: usize, col: usize) -> bool {
        self.class_at(row, col) != SemanticClass::Background
    }

    pub fn as_slice(&self) -> &[[f64; 3]] {
        &self.probs
    }
}

/// Per-instance pixel probabilities obtained by fusing `n_draws` posterior
/// draws. Values are exact draw frequencies: internally the map stores the
/// integer count of draws that claimed each pixel, so every probability is
/// k/T for some 0 <= k <= T.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilisticInstanceMap {
    height: usize,
    width: usize,
    n_draws: u32,
    counts: Vec<Grid2D<u32>>,
}

impl ProbabilisticInstanceMap {
    pub fn from_counts(
        height: usize,
        width: usize,
        n_draws: u32,
        counts: Vec<Grid2D<u32>>,
    ) -> Result<Self> {
        if n_draws == 0 {
            return Err(Error::invalid_param("n_draws", "must be >= 1"));
        }
        let _probe = Grid2D::<u8>::filled(height, width, 0)?;
        for grid in &counts {
            if grid.shape() != (height, width) {
                return Err(Error::ShapeMismatch {
                    expected: (height, width),
                    actual: grid.shape(),
                });
            }
            if grid.iter().any(|&k| k > n_draws) {
                return Err(Error::invalid_param(
                    "counts",
                    "a pixel count exceeds the number of draws",
                ));
            }
        }
        Ok(Self {
            height,
            width,
            n_draws,
            counts,
        })
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

    pub fn n_draws(&self) -> u32 {
        self.n_draws
    }

    pub fn n_instances(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self, instance: usize) -> &Grid2D<u32> {
        &self.counts[instance]
    }

    #[inline]
    pub fn prob(&self, instance: usize, row: usize, col: usize) -> f64 {
        *self.counts[instance].get(row, col) as f64 / self.n_draws as f64
    }

    /// Probability grid for one instance.
    pub fn prob_grid(&self, instance: usize) -> Grid2D<f64> {
        let t = self.n_draws as f64;
        self.counts[instance].map(|&k| k as f64 / t)
    }
}

/// Per-pixel uncertainty values. Maps produced from Bernoulli entropies lie
/// in [0, ln 2]; the sum-combined variant may exceed that bound.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    grid: Grid2D<f64>,
}

impl UncertaintyMap {
    pub fn from_grid(grid: Grid2D<f64>) -> Result<Self> {
        if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid_param(
                "entropy",
                "uncertainty values must be finite and non-negative",
            ));
        }
        Ok(Self { grid })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.grid.shape()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        *self.grid.get(row, col)
    }

    pub fn grid(&self) -> &Grid2D<f64> {
        &self.grid
    }
}
