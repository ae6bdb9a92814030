//! Per-pixel grids with validity masks.
//!
//! All maps are stored row-major, top row first, with pixel `(x, y)` at
//! index `y * width + x`. Invalid cells keep whatever value was written
//! (zero for maps produced by this crate) and are skipped by every reduction.

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Boolean validity raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, bits: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "mask of {}x{} needs {} cells, got {}",
                width,
                height,
                width * height,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn same_size(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        check_dims(self.width, self.height, other.width, other.height)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect();
        Ok(Mask { width: self.width, height: self.height, bits })
    }
}

pub(crate) fn check_dims(w0: usize, h0: usize, w1: usize, h1: usize) -> Result<()> {
    if w0 != w1 || h0 != h1 {
        return Err(Error::GridMismatch(format!("{w0}x{h0} vs {w1}x{h1}")));
    }
    Ok(())
}

/// A `width x height` grid of values paired with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
    valid: Vec<bool>,
}

/// gamma = h / Z (unitless), anchored on the target grid.
pub type GammaMap = Grid<f64>;
/// Depth Z along the optical axis (meters).
pub type DepthMap = Grid<f64>;
/// Height above the road plane (meters).
pub type HeightMap = Grid<f64>;
pub type ScalarMap = Grid<f64>;
/// Per-pixel displacement in pixels.
pub type FlowField = Grid<Vector2<f64>>;

impl<T: Clone + Default> Grid<T> {
    /// A grid filled with `T::default()` and every cell invalid.
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![T::default(); width * height],
            valid: vec![false; width * height],
        }
    }

    /// A grid filled with `value`, every cell valid.
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, values: vec![value; width * height], valid: vec![true; width * height] }
    }
}

impl<T> Grid<T> {
    pub fn from_parts(width: usize, height: usize, values: Vec<T>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != width * height || valid.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "grid of {}x{} needs {} cells, got {} values / {} mask bits",
                width,
                height,
                width * height,
                values.len(),
                valid.len()
            )));
        }
        Ok(Self { width, height, values, valid })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn value(&self, x: usize, y: usize) -> &T {
        &self.values[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    /// The value at `(x, y)` if the cell is valid.
    pub fn get(&self, x: usize, y: usize) -> Option<&T> {
        let i = y * self.width + x;
        self.valid[i].then(|| &self.values[i])
    }

    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = y * self.width + x;
        self.values[i] = value;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.valid[i] = false;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_mut(&mut self) -> &mut [bool] {
        &mut self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|b| **b).count()
    }

    pub fn mask(&self) -> Mask {
        Mask { width: self.width, height: self.height, bits: self.valid.clone() }
    }

    /// Restricts validity to cells also set in `mask`.
    pub fn restrict(&mut self, mask: &Mask) -> Result<()> {
        check_dims(self.width, self.height, mask.width(), mask.height())?;
        for (v, m) in self.valid.iter_mut().zip(mask.as_slice()) {
            *v = *v && *m;
        }
        Ok(())
    }

    pub fn same_size<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_congruent<U>(&self, other: &Grid<U>) -> Result<()> {
        check_dims(self.width, self.height, other.width, other.height)
    }

    /// Iterates `(x, y, value)` over valid cells in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, &T)> + '_ {
        let w = self.width;
        self.values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, ok))| **ok)
            .map(move |(i, (v, _))| (i % w, i / w, v))
    }
}

impl<T: Send + Sync + Clone + Default> Grid<T> {
    /// Builds a grid by evaluating `f(x, y)` in parallel over rows. `None`
    /// marks the cell invalid. Output is independent of the schedule.
    pub fn par_from_fn<F>(width: usize, height: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> Option<T> + Sync,
    {
        let rows: Vec<Vec<Option<T>>> = (0..height)
            .into_par_iter()
            .map(|y| (0..width).map(|x| f(x, y)).collect())
            .collect();
        let mut values = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for cell in rows.into_iter().flatten() {
            match cell {
                Some(v) => {
                    values.push(v);
                    valid.push(true);
                }
                None => {
                    values.push(T::default());
                    valid.push(false);
                }
            }
        }
        Self { width, height, values, valid }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_from_fn_masks_none_cells() {
        let g = ScalarMap::par_from_fn(4, 3, |x, y| (x != y).then_some((x + 10 * y) as f64));
        assert_eq!(g.valid_count(), 12 - 3);
        assert_eq!(g.get(2, 1), Some(&12.0));
        assert_eq!(g.get(1, 1), None);
        assert_eq!(*g.value(1, 1), 0.0);
    }

    #[test]
    fn from_parts_rejects_wrong_length() {
        assert!(ScalarMap::from_parts(2, 2, vec![0.0; 3], vec![true; 4]).is_err());
    }

    #[test]
    fn restrict_and_iter_valid() {
        let mut g = ScalarMap::filled(3, 2, 1.0);
        let mut m = Mask::new(3, 2, true);
        m.set(0, 1, false);
        g.restrict(&m).unwrap();
        let cells: Vec<_> = g.iter_valid().map(|(x, y, _)| (x, y)).collect();
        assert_eq!(cells, vec![(0, 0), (1, 0), (2, 0), (1, 1), (2, 1)]);
        assert!(g.restrict(&Mask::new(2, 2, true)).is_err());
    }
}
