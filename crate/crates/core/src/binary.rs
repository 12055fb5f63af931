//! Sign binarization of latent weights, bit packing, and the weight update
//! that keeps latent values in `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::mask::{kept_position, PruneMask};
use crate::network::NetworkConfig;
use crate::tensor::{KernelShape, KernelTensor};

/// Full-precision weights kept during training, with the mask they live under.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentWeights {
    weights: KernelTensor,
    mask: PruneMask,
}

impl LatentWeights {
    pub fn new(weights: KernelTensor, mask: PruneMask) -> Result<Self, Error> {
        if weights.shape() != mask.shape() {
            return Err(Error::ShapeMismatch(format!(
                "latent {:?} vs mask {:?}",
                weights.shape(),
                mask.shape()
            )));
        }
        if let Some(v) = weights.as_slice().iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!("latent weight {v} outside [-1, 1]")));
        }
        Ok(Self { weights, mask })
    }

    /// Clips into `[-1, 1]` instead of rejecting; returns how many values moved.
    pub fn clipped(mut weights: KernelTensor, mask: PruneMask) -> Result<(Self, usize), Error> {
        let mut moved = 0;
        for v in weights.as_mut_slice() {
            let c = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
            if c != *v {
                moved += 1;
                *v = c;
            }
        }
        Ok((Self::new(weights, mask)?, moved))
    }

    pub fn weights(&self) -> &KernelTensor {
        &self.weights
    }

    pub fn mask(&self) -> &PruneMask {
        &self.mask
    }

    pub fn shape(&self) -> KernelShape {
        self.weights.shape()
    }

    /// The ±1 kernel used in forward and backward passes: sign of the latent
    /// weight at kept positions (zero maps to +1), zero elsewhere.
    pub fn binarized_kernel(&self) -> KernelTensor {
        let data = self
            .weights
            .as_slice()
            .iter()
            .zip(self.mask.flags())
            .map(|(v, keep)| match (*keep, *v >= 0.0) {
                (false, _) => 0.0,
                (true, true) => 1.0,
                (true, false) => -1.0,
            })
            .collect();
        KernelTensor::from_vec(self.shape(), data).expect("same shape")
    }

    /// One update step: `latent <- clip(latent - lr * grad, -1, 1)` at kept
    /// positions. Removed positions never change.
    pub fn apply_gradient(&mut self, grad: &KernelTensor, lr: f64) -> Result<(), Error> {
        if grad.shape() != self.shape() {
            return Err(Error::ShapeMismatch(format!(
                "gradient {:?} vs latent {:?}",
                grad.shape(),
                self.shape()
            )));
        }
        let flags = self.mask.flags();
        for ((w, g), keep) in self.weights.as_mut_slice().iter_mut().zip(grad.as_slice()).zip(flags) {
            if *keep {
                *w = (*w - lr * g).clamp(-1.0, 1.0);
            }
        }
        Ok(())
    }
}

pub fn bc_update(w: &LatentWeights, grad: &KernelTensor, lr: f64) -> Result<LatentWeights, Error> {
    let mut next = w.clone();
    next.apply_gradient(grad, lr)?;
    Ok(next)
}

/// One sign bit per kept connection of a deterministically pruned kernel.
///
/// Bits are ordered by output-map group (`P` maps per group), then input map
/// `k`, then output map within the group, so the `P` bits a processing unit
/// needs for one input row are adjacent. Bit 0 of byte 0 is the first weight;
/// a set bit means `+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryWeightPlane {
    shape: KernelShape,
    group_width: usize,
    bits: Vec<u8>,
}

impl BinaryWeightPlane {
    fn check_shape(shape: KernelShape, group_width: usize) -> Result<(), Error> {
        if group_width == 0 || shape.out_maps % group_width != 0 {
            return Err(Error::InvalidConfig(format!(
                "group width {group_width} must divide {} output maps",
                shape.out_maps
            )));
        }
        Ok(())
    }

    /// Builds a plane from a sign function `positive(k, l)`.
    pub fn from_signs(
        shape: KernelShape,
        group_width: usize,
        mut positive: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, Error> {
        Self::check_shape(shape, group_width)?;
        let count = shape.in_maps * shape.out_maps;
        let mut bits = vec![0u8; count.div_ceil(8)];
        let mut index = 0;
        for g in 0..shape.out_maps / group_width {
            for k in 0..shape.in_maps {
                for p in 0..group_width {
                    if positive(k, g * group_width + p) {
                        bits[index / 8] |= 1 << (index % 8);
                    }
                    index += 1;
                }
            }
        }
        Ok(Self {
            shape,
            group_width,
            bits,
        })
    }

    /// Wraps already-packed bytes. Padding bits past the last weight must be 0.
    pub fn from_packed(shape: KernelShape, group_width: usize, bits: Vec<u8>) -> Result<Self, Error> {
        Self::check_shape(shape, group_width)?;
        let count = shape.in_maps * shape.out_maps;
        if bits.len() != count.div_ceil(8) {
            return Err(Error::ShapeMismatch(format!(
                "{} packed bytes for {count} weights",
                bits.len()
            )));
        }
        if count % 8 != 0 && bits[bits.len() - 1] >> (count % 8) != 0 {
            return Err(Error::InvalidConfig("nonzero padding bits".into()));
        }
        Ok(Self {
            shape,
            group_width,
            bits,
        })
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    /// `P`.
    pub fn group_width(&self) -> usize {
        self.group_width
    }

    pub fn groups(&self) -> usize {
        self.shape.out_maps / self.group_width
    }

    pub fn bit_count(&self) -> usize {
        self.shape.in_maps * self.shape.out_maps
    }

    pub fn packed(&self) -> &[u8] {
        &self.bits
    }

    fn bit_at(&self, index: usize) -> bool {
        self.bits[index / 8] >> (index % 8) & 1 == 1
    }

    /// Sign bit of slice `(k, l)`; `true` means `+1`.
    pub fn bit(&self, k: usize, l: usize) -> bool {
        let (g, p) = (l / self.group_width, l % self.group_width);
        self.bit_at((g * self.shape.in_maps + k) * self.group_width + p)
    }

    /// The `P` weight bits for output group `g` and input map `k`.
    pub fn word(&self, g: usize, k: usize) -> impl Iterator<Item = bool> + '_ {
        let base = (g * self.shape.in_maps + k) * self.group_width;
        (base..base + self.group_width).map(move |i| self.bit_at(i))
    }

    /// Kept `(ι, λ)` of input map `k`.
    pub fn kept_position(&self, k: usize) -> (usize, usize) {
        kept_position(k, self.shape.width, self.shape.height)
    }

    pub fn mask(&self) -> PruneMask {
        PruneMask::deterministic(self.shape)
    }

    /// Expands to a dense ±1 kernel with zeros at removed positions.
    pub fn to_kernel(&self) -> KernelTensor {
        let mut w = KernelTensor::zeros(self.shape);
        for l in 0..self.shape.out_maps {
            for k in 0..self.shape.in_maps {
                let (iota, lambda) = self.kept_position(k);
                let v = if self.bit(k, l) { 1.0 } else { -1.0 };
                w.set(iota, lambda, k, l, v).expect("kept position in range");
            }
        }
        w
    }
}

/// Packs the signs of the kept latent weights. Only deterministic masks can be
/// packed, since the packed form has no room for positions.
pub fn binarize(w: &LatentWeights, group_width: usize) -> Result<BinaryWeightPlane, Error> {
    if !w.mask().is_deterministic() {
        return Err(Error::UnsupportedMask(format!(
            "{:?} masks cannot be packed; positions must follow from k",
            w.mask().scheme()
        )));
    }
    let shape = w.shape();
    BinaryWeightPlane::from_signs(shape, group_width, |k, l| {
        let (iota, lambda) = kept_position(k, shape.width, shape.height);
        w.weights().get(iota, lambda, k, l).expect("in range") >= 0.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageScheme {
    /// 32-bit float per weight.
    Full32,
    /// One bit per weight.
    Bc,
    /// One bit per kept weight under the deterministic mask.
    PrunedBc,
}

/// Weight storage in bits, metadata excluded.
pub fn footprint_bits(net: &NetworkConfig, scheme: StorageScheme) -> u64 {
    net.layers
        .iter()
        .map(|layer| {
            let shape = layer.kernel_shape();
            let all = shape.len() as u64;
            match scheme {
                StorageScheme::Full32 => 32 * all,
                StorageScheme::Bc => all,
                StorageScheme::PrunedBc => shape.slices() as u64,
            }
        })
        .sum()
}

/// Weight storage in bytes (bits rounded up to whole bytes).
pub fn memory_footprint(net: &NetworkConfig, scheme: StorageScheme) -> u64 {
    footprint_bits(net, scheme).div_ceil(8)
}
