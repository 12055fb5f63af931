//! Dense feature and kernel tensors.
//!
//! Feature tensors are indexed `x(i, j, k)`: row `i`, column `j`, map `k`.
//! Storage is map-major then row-major (`k`, `i`, `j`), so the row vector of
//! one map at one row is a contiguous slice; this is the unit every hardware
//! transfer moves.
//!
//! Kernel tensors are indexed `w(ι, λ, k, ℓ)`: column offset `ι`, row offset
//! `λ`, input map `k`, output map `ℓ`. Storage order is (`ℓ`, `k`, `λ`, `ι`).

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fixed::{FixedPointFormat, Fx};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<T> {
    rows: usize,
    cols: usize,
    maps: usize,
    data: Vec<T>,
}

impl<T: Copy> FeatureTensor<T> {
    pub fn filled(rows: usize, cols: usize, maps: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            maps,
            data: vec![value; rows * cols * maps],
        }
    }

    /// Wraps a buffer laid out as (`k`, `i`, `j`).
    pub fn from_vec(rows: usize, cols: usize, maps: usize, data: Vec<T>) -> Result<Self, Error> {
        if data.len() != rows * cols * maps {
            return Err(Error::ShapeMismatch(format!(
                "feature buffer of {} elements for {rows}x{cols}x{maps}",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            maps,
            data,
        })
    }

    /// Builds a tensor by evaluating `f(i, j, k)` at every position.
    pub fn from_fn(rows: usize, cols: usize, maps: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols * maps);
        for k in 0..maps {
            for i in 0..rows {
                for j in 0..cols {
                    data.push(f(i, j, k));
                }
            }
        }
        Self {
            rows,
            cols,
            maps,
            data,
        }
    }

    /// `i_max`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `j_max`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `k_max`.
    pub fn maps(&self) -> usize {
        self.maps
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.rows, self.cols, self.maps]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    fn offset(&self, i: usize, j: usize, k: usize) -> Result<usize, Error> {
        if i >= self.rows || j >= self.cols || k >= self.maps {
            return Err(Error::IndexOutOfBounds {
                index: vec![i, j, k],
                shape: vec![self.rows, self.cols, self.maps],
            });
        }
        Ok((k * self.rows + i) * self.cols + j)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Result<T, Error> {
        self.offset(i, j, k).map(|o| self.data[o])
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: T) -> Result<(), Error> {
        let o = self.offset(i, j, k)?;
        self.data[o] = value;
        Ok(())
    }

    /// Row `i` of map `k`, all columns.
    pub fn row(&self, i: usize, k: usize) -> &[T] {
        assert!(i < self.rows && k < self.maps, "row ({i}, {k}) out of bounds");
        let start = (k * self.rows + i) * self.cols;
        &self.data[start..start + self.cols]
    }

    pub fn row_mut(&mut self, i: usize, k: usize) -> &mut [T] {
        assert!(i < self.rows && k < self.maps, "row ({i}, {k}) out of bounds");
        let start = (k * self.rows + i) * self.cols;
        &mut self.data[start..start + self.cols]
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> FeatureTensor<U> {
        FeatureTensor {
            rows: self.rows,
            cols: self.cols,
            maps: self.maps,
            data: self.data.iter().copied().map(f).collect(),
        }
    }
}

impl FeatureTensor<f64> {
    pub fn zeros(rows: usize, cols: usize, maps: usize) -> Self {
        Self::filled(rows, cols, maps, 0.0)
    }

    pub fn quantize(&self, fmt: FixedPointFormat) -> FeatureTensor<Fx> {
        self.map(|x| fmt.quantize(x))
    }

    /// Largest absolute elementwise difference; `None` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        if self.shape() != other.shape() {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

impl FeatureTensor<Fx> {
    pub fn to_f64(&self) -> FeatureTensor<f64> {
        self.map(|v| v.to_f64())
    }

    pub fn raw(&self) -> FeatureTensor<i32> {
        self.map(|v| v.raw())
    }
}

/// Extents of a 4-D kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelShape {
    /// `ι_max`, horizontal extent.
    pub width: usize,
    /// `λ_max`, vertical extent.
    pub height: usize,
    /// `k_max`.
    pub in_maps: usize,
    /// `ℓ_max`.
    pub out_maps: usize,
}

impl KernelShape {
    pub fn new(width: usize, height: usize, in_maps: usize, out_maps: usize) -> Self {
        Self {
            width,
            height,
            in_maps,
            out_maps,
        }
    }

    pub fn square(size: usize, in_maps: usize, out_maps: usize) -> Self {
        Self::new(size, size, in_maps, out_maps)
    }

    /// Positions in one `(k, ℓ)` slice.
    pub fn slice_len(&self) -> usize {
        self.width * self.height
    }

    pub fn slices(&self) -> usize {
        self.in_maps * self.out_maps
    }

    pub fn len(&self) -> usize {
        self.slice_len() * self.slices()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offset(&self, iota: usize, lambda: usize, k: usize, l: usize) -> Result<usize, Error> {
        if iota >= self.width || lambda >= self.height || k >= self.in_maps || l >= self.out_maps {
            return Err(Error::IndexOutOfBounds {
                index: vec![iota, lambda, k, l],
                shape: vec![self.width, self.height, self.in_maps, self.out_maps],
            });
        }
        Ok(((l * self.in_maps + k) * self.height + lambda) * self.width + iota)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelTensor {
    shape: KernelShape,
    data: Vec<f64>,
}

impl KernelTensor {
    pub fn zeros(shape: KernelShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// Wraps a buffer laid out as (`ℓ`, `k`, `λ`, `ι`).
    pub fn from_vec(shape: KernelShape, data: Vec<f64>) -> Result<Self, Error> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "kernel buffer of {} elements for {shape:?}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: KernelShape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for l in 0..shape.out_maps {
            for k in 0..shape.in_maps {
                for lambda in 0..shape.height {
                    for iota in 0..shape.width {
                        data.push(f(iota, lambda, k, l));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, iota: usize, lambda: usize, k: usize, l: usize) -> Result<f64, Error> {
        self.shape.offset(iota, lambda, k, l).map(|o| self.data[o])
    }

    pub fn set(&mut self, iota: usize, lambda: usize, k: usize, l: usize, value: f64) -> Result<(), Error> {
        let o = self.shape.offset(iota, lambda, k, l)?;
        self.data[o] = value;
        Ok(())
    }

    /// The `ι_max × λ_max` plane connecting input map `k` to output map `l`.
    pub fn slice(&self, k: usize, l: usize) -> &[f64] {
        let n = self.shape.slice_len();
        let start = (l * self.shape.in_maps + k) * n;
        &self.data[start..start + n]
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}
