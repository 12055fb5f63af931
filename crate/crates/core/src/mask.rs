//! Connection masks for kernel slices.
//!
//! The deterministic scheme keeps a single position per `(k, ℓ)` slice, chosen
//! as the solution of `ι + λ·ι_max ≡ k (mod ι_max·λ_max)`. The kept position
//! depends on `k` alone, so every output map shares the same input window for
//! a given input map, and nothing about the mask has to be stored: it is
//! regenerated from the kernel dimensions.
//!
//! The random scheme removes `m` uniformly chosen positions per slice and is
//! only used for sparsity studies; the packed-weight and hardware paths reject
//! it.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::tensor::{KernelShape, KernelTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskScheme {
    Deterministic,
    Random { removed: usize, seed: u64 },
    /// Every connection kept.
    Full,
}

impl MaskScheme {
    /// Scheme of layer `index` in a network tagged with `self`: random masks
    /// draw a different seed per layer.
    pub fn for_layer(self, index: usize) -> Self {
        match self {
            MaskScheme::Random { removed, seed } => MaskScheme::Random {
                removed,
                seed: seed.wrapping_add(index as u64),
            },
            s => s,
        }
    }
}

/// Solves the kept-position congruence for input map `k`.
///
/// Returns `(ι, λ)` with `ι = r mod ι_max` and `λ = r div ι_max`, where
/// `r = k mod (ι_max·λ_max)`.
pub fn kept_position(k: usize, width: usize, height: usize) -> (usize, usize) {
    assert!(width >= 1 && height >= 1, "kernel extents must be at least 1");
    let r = k % (width * height);
    (r % width, r / width)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    shape: KernelShape,
    scheme: MaskScheme,
    /// One flag per kernel element, in kernel storage order.
    kept: Vec<bool>,
}

impl PruneMask {
    /// The deterministic mask for the given dimensions.
    pub fn deterministic(shape: KernelShape) -> Self {
        let mut kept = vec![false; shape.len()];
        for l in 0..shape.out_maps {
            for k in 0..shape.in_maps {
                let (iota, lambda) = kept_position(k, shape.width, shape.height);
                kept[shape.offset(iota, lambda, k, l).unwrap()] = true;
            }
        }
        Self {
            shape,
            scheme: MaskScheme::Deterministic,
            kept,
        }
    }

    pub fn full(shape: KernelShape) -> Self {
        Self {
            shape,
            scheme: MaskScheme::Full,
            kept: vec![true; shape.len()],
        }
    }

    /// Removes `removed` distinct positions from every slice, independently.
    /// Slices are visited `k`-major, so a seed fixes the whole mask.
    pub fn random(shape: KernelShape, removed: usize, seed: u64) -> Result<Self, Error> {
        let n = shape.slice_len();
        if removed >= n {
            return Err(Error::InvalidConfig(format!(
                "cannot remove {removed} of {n} positions per slice"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kept = vec![true; shape.len()];
        for k in 0..shape.in_maps {
            for l in 0..shape.out_maps {
                let base = (l * shape.in_maps + k) * n;
                for pos in sample(&mut rng, n, removed) {
                    kept[base + pos] = false;
                }
            }
        }
        Ok(Self {
            shape,
            scheme: MaskScheme::Random { removed, seed },
            kept,
        })
    }

    /// Rebuilds a mask from its scheme tag; nothing else is needed.
    pub fn regenerate(shape: KernelShape, scheme: MaskScheme) -> Result<Self, Error> {
        match scheme {
            MaskScheme::Deterministic => Ok(Self::deterministic(shape)),
            MaskScheme::Full => Ok(Self::full(shape)),
            MaskScheme::Random { removed, seed } => Self::random(shape, removed, seed),
        }
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    pub fn scheme(&self) -> MaskScheme {
        self.scheme
    }

    pub fn is_deterministic(&self) -> bool {
        self.scheme == MaskScheme::Deterministic
    }

    pub fn is_kept(&self, iota: usize, lambda: usize, k: usize, l: usize) -> bool {
        self.shape
            .offset(iota, lambda, k, l)
            .map(|o| self.kept[o])
            .unwrap_or(false)
    }

    /// Flags in kernel storage order.
    pub fn flags(&self) -> &[bool] {
        &self.kept
    }

    /// Kept `(ι, λ)` positions of slice `(k, l)`, row-major within the slice.
    pub fn kept_in_slice(&self, k: usize, l: usize) -> Vec<(usize, usize)> {
        let n = self.shape.slice_len();
        let base = (l * self.shape.in_maps + k) * n;
        self.kept[base..base + n]
            .iter()
            .enumerate()
            .filter(|(_, kept)| **kept)
            .map(|(p, _)| (p % self.shape.width, p / self.shape.width))
            .collect()
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|k| **k).count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_count() as f64 / self.shape.len() as f64
    }

    pub fn removal_fraction(&self) -> f64 {
        1.0 - self.kept_fraction()
    }
}

pub fn build_mask(width: usize, height: usize, in_maps: usize, out_maps: usize) -> PruneMask {
    PruneMask::deterministic(KernelShape::new(width, height, in_maps, out_maps))
}

pub fn random_mask(
    width: usize,
    height: usize,
    in_maps: usize,
    out_maps: usize,
    removed: usize,
    seed: u64,
) -> Result<PruneMask, Error> {
    PruneMask::random(KernelShape::new(width, height, in_maps, out_maps), removed, seed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageStats {
    /// Positions kept in at least one slice.
    pub positions_used: usize,
    /// Per position, row-major over `(λ, ι)`. For the deterministic scheme
    /// this counts input maps `k` (the mask does not vary with `ℓ`), so it
    /// sums to `k_max`; for other schemes it counts slices.
    pub histogram: Vec<usize>,
}

pub fn coverage_stats(mask: &PruneMask) -> CoverageStats {
    let shape = mask.shape();
    let mut histogram = vec![0usize; shape.slice_len()];
    let out_maps = if mask.is_deterministic() {
        shape.out_maps.min(1)
    } else {
        shape.out_maps
    };
    for k in 0..shape.in_maps {
        for l in 0..out_maps {
            for (iota, lambda) in mask.kept_in_slice(k, l) {
                histogram[lambda * shape.width + iota] += 1;
            }
        }
    }
    CoverageStats {
        positions_used: histogram.iter().filter(|c| **c > 0).count(),
        histogram,
    }
}

/// Zeroes every weight the mask removes.
pub fn apply_mask(w: &KernelTensor, mask: &PruneMask) -> Result<KernelTensor, Error> {
    if w.shape() != mask.shape() {
        return Err(Error::ShapeMismatch(format!(
            "kernel {:?} vs mask {:?}",
            w.shape(),
            mask.shape()
        )));
    }
    let data = w
        .as_slice()
        .iter()
        .zip(mask.flags())
        .map(|(v, keep)| if *keep { *v } else { 0.0 })
        .collect();
    KernelTensor::from_vec(w.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kept_position_examples() {
        assert_eq!(kept_position(0, 3, 3), (0, 0));
        assert_eq!(kept_position(5, 3, 3), (2, 1));
        assert_eq!(kept_position(64, 3, 3), (1, 0));
        assert_eq!(kept_position(17, 1, 1), (0, 0));
    }

    #[test]
    fn nine_maps_enumerate_every_position() {
        let mask = build_mask(3, 3, 9, 1);
        let mut seen: Vec<_> = (0..9).flat_map(|k| mask.kept_in_slice(k, 0)).collect();
        seen.sort();
        let all: Vec<_> = (0..3).flat_map(|l| (0..3).map(move |i| (i, l))).collect();
        let mut all = all;
        all.sort();
        assert_eq!(seen, all);
    }

    #[test]
    fn one_by_one_keeps_everything() {
        let mask = build_mask(1, 1, 7, 5);
        assert_eq!(mask.kept_count(), 35);
        assert_eq!(mask.kept_fraction(), 1.0);
    }

    #[test]
    fn removal_fraction_for_3x3() {
        let mask = build_mask(3, 3, 64, 64);
        assert_eq!(mask.kept_count(), 64 * 64);
        assert!((mask.removal_fraction() - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(format!("{:.1}", 100.0 * mask.removal_fraction()), "88.9");
    }

    #[test]
    fn random_mask_examples() {
        let full = random_mask(3, 3, 4, 4, 0, 1).unwrap();
        assert_eq!(full.kept_count(), 9 * 16);
        let sparse = random_mask(3, 3, 4, 4, 8, 1).unwrap();
        for k in 0..4 {
            for l in 0..4 {
                assert_eq!(sparse.kept_in_slice(k, l).len(), 1);
            }
        }
        assert_eq!(sparse, random_mask(3, 3, 4, 4, 8, 1).unwrap());
        assert_ne!(sparse, random_mask(3, 3, 4, 4, 8, 2).unwrap());
        assert!(random_mask(3, 3, 4, 4, 9, 1).is_err());
        assert!(random_mask(3, 3, 4, 4, 10, 1).is_err());
    }

    #[test]
    fn coverage_examples() {
        let s = coverage_stats(&build_mask(3, 3, 9, 4));
        assert_eq!(s.positions_used, 9);
        assert_eq!(s.histogram, vec![1; 9]);
        assert_eq!(coverage_stats(&build_mask(3, 3, 4, 4)).positions_used, 4);
        assert_eq!(coverage_stats(&build_mask(1, 1, 16, 4)).positions_used, 1);
    }

    #[test]
    fn apply_mask_examples() {
        let shape = KernelShape::square(3, 1, 1);
        let ones = KernelTensor::from_fn(shape, |_, _, _, _| 1.0);
        let pruned = apply_mask(&ones, &PruneMask::deterministic(shape)).unwrap();
        assert_eq!(pruned.count_nonzero(), 1);
        assert_eq!(pruned.get(0, 0, 0, 0).unwrap(), 1.0);
        assert_eq!(apply_mask(&ones, &PruneMask::full(shape)).unwrap(), ones);

        let shape = KernelShape::square(3, 6, 5);
        let ones = KernelTensor::from_fn(shape, |_, _, _, _| 1.0);
        let pruned = apply_mask(&ones, &PruneMask::deterministic(shape)).unwrap();
        assert_eq!(pruned.count_nonzero(), 30);

        let other = PruneMask::deterministic(KernelShape::square(3, 6, 4));
        assert!(apply_mask(&ones, &other).is_err());
    }

    proptest! {
        #[test]
        fn kept_position_is_periodic(k in 0usize..10_000, w in 1usize..5, h in 1usize..5) {
            prop_assert_eq!(kept_position(k, w, h), kept_position(k + w * h, w, h));
            let (iota, lambda) = kept_position(k, w, h);
            prop_assert_eq!((iota + lambda * w) % (w * h), k % (w * h));
        }

        #[test]
        fn deterministic_slices_keep_one(km in 1usize..40, lm in 1usize..12) {
            let mask = build_mask(3, 3, km, lm);
            for k in 0..km {
                let first = mask.kept_in_slice(k, 0);
                prop_assert_eq!(first.len(), 1);
                for l in 1..lm {
                    prop_assert_eq!(&mask.kept_in_slice(k, l), &first);
                }
            }
            let stats = coverage_stats(&mask);
            prop_assert_eq!(stats.histogram.iter().sum::<usize>(), km);
            let (lo, hi) = (stats.histogram.iter().min().unwrap(), stats.histogram.iter().max().unwrap());
            if km >= 9 {
                prop_assert_eq!(stats.positions_used, 9);
            }
            prop_assert!(hi - lo <= 1);
        }

        #[test]
        fn apply_mask_is_idempotent(km in 1usize..6, lm in 1usize..6, m in 0usize..9, seed in any::<u64>()) {
            let shape = KernelShape::square(3, km, lm);
            let w = KernelTensor::from_fn(shape, |a, b, k, l| (a + 3 * b + 7 * k + 11 * l) as f64 - 20.0);
            let mask = PruneMask::random(shape, m, seed).unwrap();
            let once = apply_mask(&w, &mask).unwrap();
            prop_assert_eq!(apply_mask(&once, &mask).unwrap(), once);
        }
    }
}
