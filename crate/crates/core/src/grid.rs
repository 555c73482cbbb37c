//! Dense row-major 2-D grid, the carrier for every per-pixel quantity.

use crate::error::{Error, Result};

/// A dense `height × width` grid stored in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid2D<T> {
    /// Grid filled with a single value.
    pub fn filled(height: usize, width: usize, value: T) -> Result<Self> {
        check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            data: vec![value; height * width],
        })
    }
}

impl<T> Grid2D<T> {
    /// Build from row-major data; `data.len()` must equal `height * width`.
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::invalid_param(
                "data",
                format!(
                    "length {} does not match {}x{} grid",
                    data.len(),
                    height,
                    width
                ),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[self.index(row, col)]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        let i = self.index(row, col);
        &mut self.data[i]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        let i = self.index(row, col);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    /// Apply `f` element-wise, keeping the shape.
    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid2D<U> {
        Grid2D {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Grid2D<U>) -> bool {
        self.height == other.height && self.width == other.width
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::invalid_param(
            "shape",
            format!("grid dimensions must be >= 1, got {}x{}", height, width),
        ));
    }
    Ok(())
}

/// Binary mask over the image grid.
pub type Mask = Grid2D<bool>;

impl Grid2D<bool> {
    /// Number of foreground pixels.
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v)
    }

    /// In-place union with another mask of the same shape.
    pub fn union_with(&mut self, other: &Mask) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a || *b;
        }
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        debug_assert!(self.same_shape(other));
        self.data.iter().zip(other.data.iter()).any(|(&a, &b)| a && b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dims() {
        assert!(Grid2D::<u8>::filled(0, 4, 0).is_err());
        assert!(Grid2D::<u8>::filled(4, 0, 0).is_err());
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(Grid2D::from_vec(2, 3, vec![0u8; 5]).is_err());
        assert!(Grid2D::from_vec(2, 3, vec![0u8; 6]).is_ok());
    }

    #[test]
    fn row_major_indexing() {
        let g = Grid2D::from_vec(2, 3, (0..6).collect::<Vec<i32>>()).unwrap();
        assert_eq!(*g.get(0, 0), 0);
        assert_eq!(*g.get(0, 2), 2);
        assert_eq!(*g.get(1, 0), 3);
        assert_eq!(*g.get(1, 2), 5);
    }

    #[test]
    fn mask_union_and_count() {
        let mut a = Mask::from_vec(1, 4, vec![true, false, false, true]).unwrap();
        let b = Mask::from_vec(1, 4, vec![false, true, false, true]).unwrap();
        a.union_with(&b);
        assert_eq!(a.count_ones(), 3);
        assert!(a.intersects(&b));
    }
}
