//! Synthetic oriented-pattern images.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::tensor::FeatureTensor;

/// Pattern families, one per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    HorizontalBars,
    VerticalBars,
    Diagonal,
    Checkerboard,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [
        Pattern::HorizontalBars,
        Pattern::VerticalBars,
        Pattern::Diagonal,
        Pattern::Checkerboard,
    ];

    /// `+1` on the pattern, `-1` off it; `phase` shifts the pattern and
    /// `period` sets the bar spacing.
    fn value(self, i: usize, j: usize, phase: usize, period: usize) -> f64 {
        let half = period / 2;
        let on = match self {
            Pattern::HorizontalBars => (i + phase) % period < half,
            Pattern::VerticalBars => (j + phase) % period < half,
            Pattern::Diagonal => (i + j + phase) % period < half,
            Pattern::Checkerboard => ((i + phase) / half + (j + phase) / half) % 2 == 0,
        };
        if on {
            1.0
        } else {
            -1.0
        }
    }
}

/// Class-balanced labelled images, regenerable from `(per_class, size, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub images: Vec<FeatureTensor<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub seed: u64,
}

impl ToyDataset {
    /// `per_class` images of each pattern, `size × size × 1`, with additive
    /// uniform noise of amplitude `noise`. Samples are interleaved by class.
    pub fn generate(per_class: usize, size: usize, noise: f64, seed: u64) -> Result<Self, Error> {
        if size < 4 {
            return Err(Error::InvalidConfig(format!("toy images need size >= 4, got {size}")));
        }
        if !(0.0..=4.0).contains(&noise) {
            return Err(Error::InvalidConfig(format!("noise amplitude {noise} outside [0, 4]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images = Vec::with_capacity(per_class * Pattern::ALL.len());
        let mut labels = Vec::with_capacity(images.capacity());
        for _ in 0..per_class {
            for (class, pattern) in Pattern::ALL.iter().enumerate() {
                let period = *[4usize, 6].choose(&mut rng).unwrap();
                let phase = rng.gen_range(0..period);
                let img = FeatureTensor::from_fn(size, size, 1, |i, j, _| {
                    pattern.value(i, j, phase, period) + noise * rng.gen_range(-1.0..1.0)
                });
                images.push(img);
                labels.push(class);
            }
        }
        Ok(Self {
            images,
            labels,
            classes: Pattern::ALL.len(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_regenerable() {
        let a = ToyDataset::generate(5, 12, 0.3, 9).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a.class_counts(), vec![5; 4]);
        assert_eq!(a, ToyDataset::generate(5, 12, 0.3, 9).unwrap());
        assert_ne!(a.images, ToyDataset::generate(5, 12, 0.3, 10).unwrap().images);
        assert_eq!(a.images[0].shape(), [12, 12, 1]);
    }

    #[test]
    fn noiseless_patterns_are_two_valued() {
        let d = ToyDataset::generate(2, 8, 0.0, 1).unwrap();
        for img in &d.images {
            assert!(img.as_slice().iter().all(|v| v.abs() == 1.0));
        }
        assert!(ToyDataset::generate(1, 3, 0.0, 1).is_err());
        assert!(ToyDataset::generate(1, 8, -1.0, 1).is_err());
    }
}
