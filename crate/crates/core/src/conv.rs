//! Functional convolution paths.
//!
//! All paths compute the same cross-correlation geometry, fixed by
//! [`ConvConfig`]:
//!
//! * `Same`: output keeps the input size; tap `(ι, λ)` of output `(i, j)`
//!   reads input `(i + λ - c_h, j + ι - c_w)` with `c` the kernel centre.
//! * `HwWindow` (3×3 only): output has `j_max - 2` columns. Tap `(ι, λ)` of
//!   output `(i, j')` reads input `(i + λ - 1, j' + ι)`, i.e. column offset `ι`
//!   picks the first, middle or last `j_max - 2` values of a row, and rows
//!   outside the input contribute nothing.
//!
//! Stride 2 evaluates the stride-1 result at even indices in both directions.
//! Out-of-range taps read zero.

use serde::Serialize;

use crate::binary::BinaryWeightPlane;
use crate::error::Error;
use crate::fixed::{FixedPointFormat, Fx};
use crate::mask::{apply_mask, PruneMask};
use crate::tensor::{FeatureTensor, KernelShape, KernelTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Padding {
    HwWindow,
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ConvConfig {
    pub stride: usize,
    pub padding: Padding,
    /// `ι_max`.
    pub width: usize,
    /// `λ_max`.
    pub height: usize,
}

impl ConvConfig {
    pub fn hw_window(stride: usize) -> Self {
        Self {
            stride,
            padding: Padding::HwWindow,
            width: 3,
            height: 3,
        }
    }

    pub fn same(size: usize, stride: usize) -> Self {
        Self {
            stride,
            padding: Padding::Same,
            width: size,
            height: size,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::InvalidConfig(format!("stride must be 1 or 2, got {}", self.stride)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("kernel extents must be at least 1".into()));
        }
        if self.padding == Padding::HwWindow && (self.width, self.height) != (3, 3) {
            return Err(Error::InvalidConfig("hardware windows need a 3x3 kernel".into()));
        }
        Ok(())
    }

    /// Row offset added to `stride * i_out` for vertical tap `λ`.
    pub fn row_offset(&self, lambda: usize) -> isize {
        match self.padding {
            Padding::HwWindow => lambda as isize - 1,
            Padding::Same => lambda as isize - ((self.height - 1) / 2) as isize,
        }
    }

    /// Column offset added to `stride * j_out` for horizontal tap `ι`.
    pub fn col_offset(&self, iota: usize) -> isize {
        match self.padding {
            Padding::HwWindow => iota as isize,
            Padding::Same => iota as isize - ((self.width - 1) / 2) as isize,
        }
    }

    /// Output `(rows, cols)` for an input of `rows × cols`.
    pub fn output_dims(&self, rows: usize, cols: usize) -> (usize, usize) {
        let cols1 = match self.padding {
            Padding::HwWindow => cols.saturating_sub(2),
            Padding::Same => cols,
        };
        (rows.div_ceil(self.stride), cols1.div_ceil(self.stride))
    }

    fn check_input<T>(&self, x: &FeatureTensor<T>, kernel: KernelShape) -> Result<(usize, usize), Error>
    where
        T: Copy,
    {
        self.validate()?;
        if (kernel.width, kernel.height) != (self.width, self.height) {
            return Err(Error::ShapeMismatch(format!(
                "kernel is {}x{} but config expects {}x{}",
                kernel.width, kernel.height, self.width, self.height
            )));
        }
        if x.maps() != kernel.in_maps {
            return Err(Error::ShapeMismatch(format!(
                "input has {} maps, kernel expects {}",
                x.maps(),
                kernel.in_maps
            )));
        }
        if x.as_slice().is_empty() {
            return Err(Error::ShapeMismatch("empty input tensor".into()));
        }
        if self.padding == Padding::HwWindow && x.cols() < 3 {
            return Err(Error::ShapeMismatch(format!(
                "hardware windows need at least 3 columns, got {}",
                x.cols()
            )));
        }
        Ok(self.output_dims(x.rows(), x.cols()))
    }
}

fn source(base: usize, stride: usize, offset: isize, limit: usize) -> Option<usize> {
    let s = (base * stride) as isize + offset;
    (0..limit as isize).contains(&s).then_some(s as usize)
}

/// Arithmetic performed by an instrumented run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounters {
    pub multiplications: u64,
    pub additions: u64,
    pub negations: u64,
    /// Results the fixed-point overflow policy had to correct.
    pub saturations: u64,
}

impl std::ops::AddAssign for OpCounters {
    fn add_assign(&mut self, o: Self) {
        self.multiplications += o.multiplications;
        self.additions += o.additions;
        self.negations += o.negations;
        self.saturations += o.saturations;
    }
}

pub fn conv2d_dense(x: &FeatureTensor<f64>, w: &KernelTensor, cfg: &ConvConfig) -> Result<FeatureTensor<f64>, Error> {
    conv2d_dense_counted(x, w, cfg, &mut OpCounters::default())
}

/// Reference cross-correlation over every kernel tap.
pub fn conv2d_dense_counted(
    x: &FeatureTensor<f64>,
    w: &KernelTensor,
    cfg: &ConvConfig,
    ops: &mut OpCounters,
) -> Result<FeatureTensor<f64>, Error> {
    let shape = w.shape();
    let (rows, cols) = cfg.check_input(x, shape)?;
    let mut out = FeatureTensor::zeros(rows, cols, shape.out_maps);
    for l in 0..shape.out_maps {
        for a in 0..rows {
            for b in 0..cols {
                let mut acc = 0.0;
                for k in 0..shape.in_maps {
                    for lambda in 0..shape.height {
                        let Some(si) = source(a, cfg.stride, cfg.row_offset(lambda), x.rows()) else {
                            continue;
                        };
                        for iota in 0..shape.width {
                            let Some(sj) = source(b, cfg.stride, cfg.col_offset(iota), x.cols()) else {
                                continue;
                            };
                            acc += w.get(iota, lambda, k, l)? * x.row(si, k)[sj];
                            ops.multiplications += 1;
                            ops.additions += 1;
                        }
                    }
                }
                out.set(a, b, l, acc)?;
            }
        }
    }
    Ok(out)
}

pub fn conv2d_pruned(
    x: &FeatureTensor<f64>,
    w: &KernelTensor,
    mask: &PruneMask,
    cfg: &ConvConfig,
) -> Result<FeatureTensor<f64>, Error> {
    conv2d_pruned_counted(x, w, mask, cfg, &mut OpCounters::default())
}

/// Pruned convolution as a sum of shifted, scaled input maps: each kept tap of
/// slice `(k, ℓ)` adds `w · shift(x_k)` to output map `ℓ`.
pub fn conv2d_pruned_counted(
    x: &FeatureTensor<f64>,
    w: &KernelTensor,
    mask: &PruneMask,
    cfg: &ConvConfig,
    ops: &mut OpCounters,
) -> Result<FeatureTensor<f64>, Error> {
    let shape = w.shape();
    if mask.shape() != shape {
        return Err(Error::ShapeMismatch(format!("mask {:?} vs kernel {shape:?}", mask.shape())));
    }
    let (rows, cols) = cfg.check_input(x, shape)?;
    let mut out = FeatureTensor::zeros(rows, cols, shape.out_maps);
    for l in 0..shape.out_maps {
        for k in 0..shape.in_maps {
            for (iota, lambda) in mask.kept_in_slice(k, l) {
                let scale = w.get(iota, lambda, k, l)?;
                let (ro, co) = (cfg.row_offset(lambda), cfg.col_offset(iota));
                for a in 0..rows {
                    let Some(si) = source(a, cfg.stride, ro, x.rows()) else {
                        continue;
                    };
                    let src = x.row(si, k);
                    let dst = out.row_mut(a, l);
                    for (b, d) in dst.iter_mut().enumerate() {
                        if let Some(sj) = source(b, cfg.stride, co, src.len()) {
                            *d += scale * src[sj];
                            ops.multiplications += 1;
                            ops.additions += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Scalars a sign-selected accumulation can run on.
pub trait ConvScalar: Copy {
    fn zero_like(sample: Self) -> Self;
    /// `self + (positive ? term : -term)`, recording the operations used.
    fn accumulate(self, term: Self, positive: bool, ops: &mut OpCounters) -> Self;
    fn relu(self) -> Self;
}

impl ConvScalar for f64 {
    fn zero_like(_: Self) -> Self {
        0.0
    }

    fn accumulate(self, term: Self, positive: bool, ops: &mut OpCounters) -> Self {
        ops.additions += 1;
        if positive {
            self + term
        } else {
            ops.negations += 1;
            self - term
        }
    }

    fn relu(self) -> Self {
        self.max(0.0)
    }
}

impl ConvScalar for Fx {
    fn zero_like(sample: Self) -> Self {
        sample.format().zero()
    }

    fn accumulate(self, term: Self, positive: bool, ops: &mut OpCounters) -> Self {
        let fmt = self.format();
        let mut raw = term.raw();
        if !positive {
            let (neg, hit) = fmt.negate_raw(raw);
            ops.negations += 1;
            ops.saturations += hit as u64;
            raw = neg;
        }
        let (sum, hit) = fmt.add_raw(self.raw(), raw);
        ops.additions += 1;
        ops.saturations += hit as u64;
        fmt.from_raw(sum).expect("policy keeps values in range")
    }

    fn relu(self) -> Self {
        Fx::relu(self)
    }
}

pub fn conv2d_pruned_binary<S: ConvScalar>(
    x: &FeatureTensor<S>,
    bits: &BinaryWeightPlane,
    cfg: &ConvConfig,
) -> Result<FeatureTensor<S>, Error> {
    conv2d_pruned_binary_counted(x, bits, cfg, &mut OpCounters::default())
}

/// Multiplication-free pruned convolution: every output map is a signed sum of
/// shifted input maps, the sign coming from one weight bit per slice. Input
/// maps are accumulated in ascending `k`.
pub fn conv2d_pruned_binary_counted<S: ConvScalar>(
    x: &FeatureTensor<S>,
    bits: &BinaryWeightPlane,
    cfg: &ConvConfig,
    ops: &mut OpCounters,
) -> Result<FeatureTensor<S>, Error> {
    let shape = bits.shape();
    let (rows, cols) = cfg.check_input(x, shape)?;
    let zero = S::zero_like(x.as_slice()[0]);
    let mut out = FeatureTensor::filled(rows, cols, shape.out_maps, zero);
    for l in 0..shape.out_maps {
        for k in 0..shape.in_maps {
            let (iota, lambda) = bits.kept_position(k);
            let positive = bits.bit(k, l);
            let (ro, co) = (cfg.row_offset(lambda), cfg.col_offset(iota));
            for a in 0..rows {
                let Some(si) = source(a, cfg.stride, ro, x.rows()) else {
                    continue;
                };
                let src = x.row(si, k);
                let dst = out.row_mut(a, l);
                for (b, d) in dst.iter_mut().enumerate() {
                    if let Some(sj) = source(b, cfg.stride, co, src.len()) {
                        *d = d.accumulate(src[sj], positive, ops);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Fixed-point pruned binary convolution in hardware-window geometry, with the
/// same accumulation order and overflow handling as the layer-block
/// registers. Returns pre-activation values.
pub fn conv2d_fixed(
    x: &FeatureTensor<Fx>,
    bits: &BinaryWeightPlane,
    cfg: &ConvConfig,
    fmt: FixedPointFormat,
) -> Result<(FeatureTensor<Fx>, OpCounters), Error> {
    if cfg.padding != Padding::HwWindow {
        return Err(Error::InvalidConfig("fixed-point path only supports hardware windows".into()));
    }
    if let Some(v) = x.as_slice().iter().find(|v| v.format() != fmt) {
        return Err(Error::FormatMismatch {
            left: v.format().to_string(),
            right: fmt.to_string(),
        });
    }
    let mut ops = OpCounters::default();
    let out = conv2d_pruned_binary_counted(x, bits, cfg, &mut ops)?;
    Ok((out, ops))
}

pub fn relu<S: ConvScalar>(t: &FeatureTensor<S>) -> FeatureTensor<S> {
    t.map(S::relu)
}

/// Optional per-output-map `scale * y + shift`, float paths only.
pub fn affine(t: &FeatureTensor<f64>, scale: &[f64], shift: &[f64]) -> Result<FeatureTensor<f64>, Error> {
    if scale.len() != t.maps() || shift.len() != t.maps() {
        return Err(Error::ShapeMismatch(format!(
            "affine parameters for {} / {} maps, tensor has {}",
            scale.len(),
            shift.len(),
            t.maps()
        )));
    }
    Ok(FeatureTensor::from_fn(t.rows(), t.cols(), t.maps(), |i, j, k| {
        scale[k] * t.row(i, k)[j] + shift[k]
    }))
}

/// Widens rows back to `cols` columns, placing the existing values at
/// `offset` and filling the rest with `zero`. Used to hand hardware-window
/// outputs (which are two columns narrower) to the next layer.
pub fn repad_columns<T: Copy>(t: &FeatureTensor<T>, cols: usize, offset: usize, zero: T) -> FeatureTensor<T> {
    FeatureTensor::from_fn(t.rows(), cols, t.maps(), |i, j, k| {
        if j >= offset && j - offset < t.cols() {
            t.row(i, k)[j - offset]
        } else {
            zero
        }
    })
}

/// Column offset used by [`repad_columns`] after a layer of the given stride:
/// a stride-1 window output is centred, a stride-2 one is already aligned.
pub fn repad_offset(stride: usize) -> usize {
    if stride == 1 {
        1
    } else {
        0
    }
}

/// Applies a pruned binary layer to real inputs through the scaled-shift path,
/// i.e. with `±1` multiplications. Handy when comparing engines.
pub fn conv2d_binary_reference(
    x: &FeatureTensor<f64>,
    bits: &BinaryWeightPlane,
    cfg: &ConvConfig,
    ops: &mut OpCounters,
) -> Result<FeatureTensor<f64>, Error> {
    let w = apply_mask(&bits.to_kernel(), &bits.mask())?;
    conv2d_pruned_counted(x, &w, &bits.mask(), cfg, ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed::Overflow;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(rng: &mut ChaCha8Rng, rows: usize, cols: usize, maps: usize) -> FeatureTensor<f64> {
        FeatureTensor::from_fn(rows, cols, maps, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    fn random_kernel(rng: &mut ChaCha8Rng, shape: KernelShape) -> KernelTensor {
        KernelTensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
    }

    /// Brute-force neighbourhood sum with zero padding, written independently
    /// of the convolution code.
    fn neighbourhood_sums(x: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, o) in row.iter_mut().enumerate() {
                for di in -1i32..=1 {
                    for dj in -1i32..=1 {
                        let (a, b) = (i as i32 + di, j as i32 + dj);
                        if (0..4).contains(&a) && (0..4).contains(&b) {
                            *o += x[a as usize][b as usize];
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn dense_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_features(&mut rng, 5, 6, 1);
        let shape = KernelShape::square(3, 1, 1);
        let id = KernelTensor::from_fn(shape, |a, b, _, _| if (a, b) == (1, 1) { 1.0 } else { 0.0 });
        assert_eq!(conv2d_dense(&x, &id, &ConvConfig::same(3, 1)).unwrap(), x);
        let zero = conv2d_dense(&x, &KernelTensor::zeros(shape), &ConvConfig::same(3, 1)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn dense_all_ones_matches_neighbourhood_sums() {
        let mut grid = [[0.0; 4]; 4];
        for (i, row) in grid.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (4 * i + j + 1) as f64;
            }
        }
        let x = FeatureTensor::from_fn(4, 4, 1, |i, j, _| grid[i][j]);
        let ones = KernelTensor::from_fn(KernelShape::square(3, 1, 1), |_, _, _, _| 1.0);
        let y = conv2d_dense(&x, &ones, &ConvConfig::same(3, 1)).unwrap();
        let expect = neighbourhood_sums(&grid);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(y.get(i, j, 0).unwrap(), expect[i][j]);
            }
        }
        // Corner: 1 + 2 + 5 + 6.
        assert_eq!(expect[0][0], 14.0);
    }

    #[test]
    fn hw_window_is_same_without_border_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_features(&mut rng, 6, 7, 3);
        let w = random_kernel(&mut rng, KernelShape::square(3, 3, 2));
        let same = conv2d_dense(&x, &w, &ConvConfig::same(3, 1)).unwrap();
        let hw = conv2d_dense(&x, &w, &ConvConfig::hw_window(1)).unwrap();
        assert_eq!(hw.shape(), [6, 5, 2]);
        for l in 0..2 {
            for i in 0..6 {
                for j in 0..5 {
                    let d = hw.get(i, j, l).unwrap() - same.get(i, j + 1, l).unwrap();
                    assert!(d.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn stride_two_subsamples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_features(&mut rng, 7, 8, 2);
        let w = random_kernel(&mut rng, KernelShape::square(3, 2, 2));
        for padding in [Padding::Same, Padding::HwWindow] {
            let c1 = ConvConfig { padding, ..ConvConfig::hw_window(1) };
            let c2 = ConvConfig { stride: 2, ..c1 };
            let full = conv2d_dense(&x, &w, &c1).unwrap();
            let sub = conv2d_dense(&x, &w, &c2).unwrap();
            assert_eq!(sub.rows(), full.rows().div_ceil(2));
            assert_eq!(sub.cols(), full.cols().div_ceil(2));
            for l in 0..2 {
                for a in 0..sub.rows() {
                    for b in 0..sub.cols() {
                        assert_eq!(sub.get(a, b, l).unwrap(), full.get(2 * a, 2 * b, l).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn dense_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = ConvConfig::same(3, 1);
        let shape = KernelShape::square(3, 3, 2);
        for _ in 0..10 {
            let (x1, x2) = (random_features(&mut rng, 5, 5, 3), random_features(&mut rng, 5, 5, 3));
            let (w1, w2) = (random_kernel(&mut rng, shape), random_kernel(&mut rng, shape));
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let xs = FeatureTensor::from_fn(5, 5, 3, |i, j, k| a * x1.row(i, k)[j] + b * x2.row(i, k)[j]);
            let lhs = conv2d_dense(&xs, &w1, &cfg).unwrap();
            let y1 = conv2d_dense(&x1, &w1, &cfg).unwrap();
            let y2 = conv2d_dense(&x2, &w1, &cfg).unwrap();
            let rhs = FeatureTensor::from_fn(5, 5, 2, |i, j, l| a * y1.row(i, l)[j] + b * y2.row(i, l)[j]);
            assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-6);

            let ws = KernelTensor::from_vec(
                shape,
                w1.as_slice().iter().zip(w2.as_slice()).map(|(p, q)| a * p + b * q).collect(),
            )
            .unwrap();
            let lhs = conv2d_dense(&x1, &ws, &cfg).unwrap();
            let z2 = conv2d_dense(&x1, &w2, &cfg).unwrap();
            let rhs = FeatureTensor::from_fn(5, 5, 2, |i, j, l| a * y1.row(i, l)[j] + b * z2.row(i, l)[j]);
            assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-6);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let x = FeatureTensor::zeros(4, 4, 2);
        let w = KernelTensor::zeros(KernelShape::square(3, 3, 1));
        assert!(conv2d_dense(&x, &w, &ConvConfig::same(3, 1)).is_err());
        let w = KernelTensor::zeros(KernelShape::square(1, 2, 1));
        assert!(conv2d_dense(&x, &w, &ConvConfig::hw_window(1)).is_err());
        assert!(conv2d_dense(&x, &w, &ConvConfig::same(1, 3)).is_err());
    }

    #[test]
    fn pruned_full_mask_equals_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_features(&mut rng, 6, 6, 4);
        let shape = KernelShape::square(3, 4, 3);
        let w = random_kernel(&mut rng, shape);
        let cfg = ConvConfig::same(3, 1);
        let a = conv2d_pruned(&x, &w, &PruneMask::full(shape), &cfg).unwrap();
        let b = conv2d_dense(&x, &w, &cfg).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn pruned_single_tap_is_a_scaled_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_features(&mut rng, 5, 6, 1);
        let shape = KernelShape::square(3, 1, 1);
        let w = KernelTensor::from_fn(shape, |a, b, _, _| if (a, b) == (0, 0) { 0.75 } else { 9.0 });
        let y = conv2d_pruned(&x, &w, &PruneMask::deterministic(shape), &ConvConfig::hw_window(1)).unwrap();
        // Kept (ι, λ) = (0, 0): output (i, j) reads input (i - 1, j).
        for i in 0..5 {
            for j in 0..4 {
                let expect = if i == 0 { 0.0 } else { 0.75 * x.get(i - 1, j, 0).unwrap() };
                assert_eq!(y.get(i, j, 0).unwrap(), expect);
            }
        }
    }

    fn plane(rng: &mut ChaCha8Rng, km: usize, lm: usize, p: usize) -> BinaryWeightPlane {
        BinaryWeightPlane::from_signs(KernelShape::square(3, km, lm), p, |_, _| rng.gen_bool(0.5)).unwrap()
    }

    #[test]
    fn binary_sign_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_features(&mut rng, 4, 5, 1);
        let shape = KernelShape::square(1, 1, 1);
        let pos = BinaryWeightPlane::from_signs(shape, 1, |_, _| true).unwrap();
        let neg = BinaryWeightPlane::from_signs(shape, 1, |_, _| false).unwrap();
        let cfg = ConvConfig::same(1, 1);
        assert_eq!(conv2d_pruned_binary(&x, &pos, &cfg).unwrap(), x);
        assert_eq!(conv2d_pruned_binary(&x, &neg, &cfg).unwrap(), x.map(|v| -v));
    }

    #[test]
    fn binary_matches_pruned_and_never_multiplies() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for stride in [1, 2] {
            let x = random_features(&mut rng, 7, 7, 9);
            let bits = plane(&mut rng, 9, 9, 3);
            let cfg = ConvConfig::hw_window(stride);
            let mut ops = OpCounters::default();
            let y = conv2d_pruned_binary_counted(&x, &bits, &cfg, &mut ops).unwrap();
            assert_eq!(ops.multiplications, 0);
            assert!(ops.additions > 0);
            let oracle = conv2d_pruned(&x, &bits.to_kernel(), &bits.mask(), &cfg).unwrap();
            assert!(y.max_abs_diff(&oracle).unwrap() < 1e-6);
        }
    }

    #[test]
    fn fixed_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fmt = FixedPointFormat::default();
        let bits = plane(&mut rng, 2, 2, 1);
        let zero = FeatureTensor::filled(5, 5, 2, fmt.zero());
        let (y, ops) = conv2d_fixed(&zero, &bits, &ConvConfig::hw_window(1), fmt).unwrap();
        assert!(y.as_slice().iter().all(|v| v.raw() == 0));
        assert_eq!(ops.saturations, 0);

        // One map, positive bit, kept (0, 0): rows shift down by one.
        let shape = KernelShape::square(3, 1, 1);
        let pos = BinaryWeightPlane::from_signs(shape, 1, |_, _| true).unwrap();
        let x = random_features(&mut rng, 4, 5, 1).quantize(fmt);
        let (y, _) = conv2d_fixed(&x, &pos, &ConvConfig::hw_window(1), fmt).unwrap();
        assert!(y.row(0, 0).iter().all(|v| v.raw() == 0));
        for i in 1..4 {
            assert_eq!(y.row(i, 0), &x.row(i - 1, 0)[..3]);
        }

        let other = FixedPointFormat::new(12, 4, Overflow::Wrap).unwrap();
        assert!(conv2d_fixed(&x, &pos, &ConvConfig::hw_window(1), other).is_err());
        assert!(conv2d_fixed(&x, &pos, &ConvConfig::same(3, 1), fmt).is_err());
    }

    #[test]
    fn fixed_agrees_with_float_without_saturation() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let fmt = FixedPointFormat::default();
        for _ in 0..20 {
            let x = random_features(&mut rng, 6, 6, 8).quantize(fmt);
            let bits = plane(&mut rng, 8, 4, 2);
            let cfg = ConvConfig::hw_window(1);
            let (y, ops) = conv2d_fixed(&x, &bits, &cfg, fmt).unwrap();
            assert_eq!(ops.saturations, 0);
            let float = conv2d_pruned_binary(&x.to_f64(), &bits, &cfg).unwrap();
            assert_eq!(float.quantize(fmt), y);
        }
    }

    #[test]
    fn fixed_counts_saturation() {
        let fmt = FixedPointFormat::default();
        let shape = KernelShape::square(3, 9, 1);
        let bits = BinaryWeightPlane::from_signs(shape, 1, |_, _| true).unwrap();
        let x = FeatureTensor::filled(5, 5, 9, fmt.quantize(100.0));
        let (y, ops) = conv2d_fixed(&x, &bits, &ConvConfig::hw_window(1), fmt).unwrap();
        assert!(ops.saturations > 0);
        assert_eq!(y.get(2, 1, 0).unwrap().raw(), fmt.max_raw());
    }

    #[test]
    fn relu_cases() {
        let t = FeatureTensor::from_vec(1, 3, 1, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).as_slice(), &[0.0, 0.0, 2.0]);
        let neg = FeatureTensor::filled(2, 2, 2, -3.5);
        assert_eq!(relu(&neg).max_abs(), 0.0);
        let pos = FeatureTensor::filled(2, 2, 2, 3.5);
        assert_eq!(relu(&pos), pos);
        let fmt = FixedPointFormat::default();
        let fx = t.quantize(fmt);
        assert_eq!(relu(&fx).raw().as_slice(), &[0, 0, 512]);
        assert_eq!(relu(&relu(&t)), relu(&t));
    }

    #[test]
    fn affine_and_repad() {
        let t = FeatureTensor::from_fn(2, 2, 2, |i, j, k| (i + j + k) as f64);
        let a = affine(&t, &[2.0, 1.0], &[0.0, -1.0]).unwrap();
        assert_eq!(a.get(1, 1, 0).unwrap(), 4.0);
        assert_eq!(a.get(1, 1, 1).unwrap(), 2.0);
        assert!(affine(&t, &[1.0], &[0.0, 0.0]).is_err());

        let r = repad_columns(&t, 4, 1, 0.0);
        assert_eq!(r.row(1, 1), &[0.0, 2.0, 3.0, 0.0]);
    }
}
