//! Binary containers: packed models (`MXCV`), float weights for ingestion
//! (`MXFW`) and feature tensors (`MXFT`). All integers are little-endian.
//!
//! Model blob:
//!
//! ```text
//! "MXCV" | u16 version | u16 flags | u32 layer_count
//! u32 config_len | config_len bytes of JSON network config
//! layer_count × (u32 bit_count | ceil(bit_count / 8) packed bytes)
//! if flags & 1: layer_count × (u32 value_count | value_count × f32 latent)
//! u32 CRC32 of every preceding byte
//! ```
//!
//! Bit 1 of `flags` would announce stored mask positions; this version never
//! writes them and rejects blobs that claim to carry them. Other flag bits are
//! reserved and must be zero.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::binary::{binarize, BinaryWeightPlane, LatentWeights};
use crate::error::Error;
use crate::mask::{MaskScheme, PruneMask};
use crate::network::NetworkConfig;
use crate::tensor::{FeatureTensor, KernelShape, KernelTensor};

pub const MODEL_MAGIC: [u8; 4] = *b"MXCV";
pub const WEIGHTS_MAGIC: [u8; 4] = *b"MXFW";
pub const TENSOR_MAGIC: [u8; 4] = *b"MXFT";
pub const FORMAT_VERSION: u16 = 1;

const FLAG_LATENT: u16 = 1;
const FLAG_MASK_POSITIONS: u16 = 1 << 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("{what}: expected {expected}, found {found}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed: {0}")]
    Malformed(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// A network description with its weights.
///
/// Deterministically pruned models carry one packed plane per layer; other
/// schemes cannot be packed and carry latent weights only.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: NetworkConfig,
    pub bits: Vec<BinaryWeightPlane>,
    pub latents: Option<Vec<LatentWeights>>,
}

impl Model {
    /// Packs the latent weights; keeps them when `keep_latent` is set.
    pub fn from_latents(config: NetworkConfig, latents: Vec<LatentWeights>, keep_latent: bool) -> Result<Self, ModelIoError> {
        config.validate()?;
        check_latents(&config, &latents)?;
        let bits = if config.scheme == MaskScheme::Deterministic {
            latents
                .iter()
                .zip(&config.layers)
                .map(|(w, d)| binarize(w, d.p))
                .collect::<Result<_, _>>()?
        } else {
            Vec::new()
        };
        let model = Self {
            config,
            bits,
            latents: keep_latent.then_some(latents),
        };
        model.validate()?;
        Ok(model)
    }

    /// Latent weights drawn uniformly from `[-1, 1]` at single precision, so
    /// the model survives an export/import cycle unchanged.
    pub fn random(config: NetworkConfig, seed: u64, keep_latent: bool) -> Result<Self, ModelIoError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let latents = config
            .layers
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let shape = d.kernel_shape();
                let w = KernelTensor::from_fn(shape, |_, _, _, _| f64::from(rng.gen_range(-1.0f32..=1.0)));
                LatentWeights::new(w, PruneMask::regenerate(shape, config.scheme.for_layer(i))?)
            })
            .collect::<Result<Vec<_>, Error>>()?;
        Self::from_latents(config, latents, keep_latent)
    }

    pub fn validate(&self) -> Result<(), ModelIoError> {
        self.config.validate()?;
        let layers = self.config.layers.len();
        if self.config.scheme == MaskScheme::Deterministic {
            if self.bits.len() != layers {
                return Err(ModelIoError::CountMismatch {
                    what: "packed layers",
                    expected: layers,
                    found: self.bits.len(),
                });
            }
            for (plane, d) in self.bits.iter().zip(&self.config.layers) {
                if plane.shape() != d.kernel_shape() || plane.group_width() != d.p {
                    return Err(ModelIoError::ShapeMismatch(format!(
                        "layer '{}': plane {:?}/P={} vs config {:?}/P={}",
                        d.name,
                        plane.shape(),
                        plane.group_width(),
                        d.kernel_shape(),
                        d.p
                    )));
                }
            }
        } else {
            if !self.bits.is_empty() {
                return Err(ModelIoError::Malformed(format!(
                    "{:?} masks cannot carry packed weights",
                    self.config.scheme
                )));
            }
            if self.latents.is_none() {
                return Err(ModelIoError::Malformed("a model without packed weights needs latent weights".into()));
            }
        }
        if let Some(latents) = &self.latents {
            check_latents(&self.config, latents)?;
        }
        Ok(())
    }

    /// Sign kernel of each layer, zero at removed positions.
    pub fn sign_kernels(&self) -> Vec<KernelTensor> {
        match &self.latents {
            Some(latents) if self.bits.is_empty() => latents.iter().map(|w| w.binarized_kernel()).collect(),
            _ => self.bits.iter().map(|b| b.to_kernel()).collect(),
        }
    }

    pub fn masks(&self) -> Result<Vec<PruneMask>, Error> {
        self.config
            .layers
            .iter()
            .enumerate()
            .map(|(i, d)| PruneMask::regenerate(d.kernel_shape(), self.config.scheme.for_layer(i)))
            .collect()
    }
}

fn check_latents(config: &NetworkConfig, latents: &[LatentWeights]) -> Result<(), ModelIoError> {
    if latents.len() != config.layers.len() {
        return Err(ModelIoError::CountMismatch {
            what: "latent layers",
            expected: config.layers.len(),
            found: latents.len(),
        });
    }
    for (i, (w, d)) in latents.iter().zip(&config.layers).enumerate() {
        let expected = PruneMask::regenerate(d.kernel_shape(), config.scheme.for_layer(i))?;
        if w.shape() != d.kernel_shape() || *w.mask() != expected {
            return Err(ModelIoError::ShapeMismatch(format!(
                "latent weights of layer '{}' do not match its kernel shape or mask",
                d.name
            )));
        }
    }
    Ok(())
}

fn push_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(out: &mut Vec<u8>, v: usize) -> Result<(), ModelIoError> {
    let v = u32::try_from(v).map_err(|_| ModelIoError::Malformed(format!("{v} does not fit a u32 field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Serializes a model. Equal models give equal bytes.
pub fn export(model: &Model) -> Result<Vec<u8>, ModelIoError> {
    model.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    push_u16(&mut out, FORMAT_VERSION);
    push_u16(&mut out, if model.latents.is_some() { FLAG_LATENT } else { 0 });
    push_u32(&mut out, model.config.layers.len())?;
    let config = model.config.to_json();
    push_u32(&mut out, config.len())?;
    out.extend_from_slice(config.as_bytes());
    for i in 0..model.config.layers.len() {
        match model.bits.get(i) {
            Some(plane) => {
                push_u32(&mut out, plane.bit_count())?;
                out.extend_from_slice(plane.packed());
            }
            None => push_u32(&mut out, 0)?,
        }
    }
    if let Some(latents) = &model.latents {
        for w in latents {
            push_u32(&mut out, w.weights().as_slice().len())?;
            for v in w.weights().as_slice() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ModelIoError> {
        let left = self.bytes.len() - self.pos;
        if n > left {
            return Err(ModelIoError::CountMismatch {
                what,
                expected: n,
                found: left,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, ModelIoError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<usize, ModelIoError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), ModelIoError> {
        let found: [u8; 4] = self.take(4, "magic bytes")?.try_into().unwrap();
        if found != expected {
            return Err(ModelIoError::BadMagic { found, expected });
        }
        Ok(())
    }

    fn f32s(&mut self, count: usize, what: &'static str) -> Result<Vec<f32>, ModelIoError> {
        let bytes = self.take(count.checked_mul(4).ok_or(ModelIoError::Malformed(format!("{what}: count {count} overflows")))?, what)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self, what: &'static str) -> Result<(), ModelIoError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(ModelIoError::Malformed(format!("{n} trailing bytes after {what}"))),
        }
    }
}

/// Parses and checks a model blob.
///
/// Checks run in a fixed order: magic, version, section lengths (a short
/// stream is a count mismatch), checksum, then contents.
pub fn import(bytes: &[u8]) -> Result<Model, ModelIoError> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(ModelIoError::UnsupportedVersion(version));
    }
    let flags = r.u16("flags")?;
    let layer_count = r.u32("layer count")?;
    let config_len = r.u32("config length")?;
    let config_bytes = r.take(config_len, "config section")?;
    let mut packed = Vec::new();
    for _ in 0..layer_count {
        let bit_count = r.u32("bit count")?;
        packed.push((bit_count, r.take(bit_count.div_ceil(8), "packed weights")?));
    }
    let mut latent_values = Vec::new();
    if flags & FLAG_LATENT != 0 {
        for _ in 0..layer_count {
            let count = r.u32("latent count")?;
            latent_values.push(r.f32s(count, "latent weights")?);
        }
    }
    let body_end = r.pos;
    let stored = r.u32("checksum")? as u32;
    r.finish("checksum")?;
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(ModelIoError::ChecksumMismatch { stored, computed });
    }

    if flags & FLAG_MASK_POSITIONS != 0 {
        return Err(ModelIoError::Malformed("stored mask positions are not part of this format".into()));
    }
    if flags & !FLAG_LATENT != 0 {
        return Err(ModelIoError::Malformed(format!("reserved flag bits set: {flags:#06x}")));
    }
    let text = std::str::from_utf8(config_bytes).map_err(|e| ModelIoError::Malformed(format!("config is not UTF-8: {e}")))?;
    let config = NetworkConfig::from_json(text)?;
    if config.layers.len() != layer_count {
        return Err(ModelIoError::CountMismatch {
            what: "layers in config",
            expected: layer_count,
            found: config.layers.len(),
        });
    }
    let mut bits = Vec::new();
    for ((bit_count, bytes), d) in packed.into_iter().zip(&config.layers) {
        let expected = if config.scheme == MaskScheme::Deterministic {
            d.kernel_shape().slices()
        } else {
            0
        };
        if bit_count != expected {
            return Err(ModelIoError::CountMismatch {
                what: "packed weight bits",
                expected,
                found: bit_count,
            });
        }
        if expected > 0 {
            let plane = BinaryWeightPlane::from_packed(d.kernel_shape(), d.p, bytes.to_vec())
                .map_err(|e| ModelIoError::Malformed(e.to_string()))?;
            bits.push(plane);
        }
    }
    let latents = if flags & FLAG_LATENT != 0 {
        let mut out = Vec::new();
        for (i, (values, d)) in latent_values.into_iter().zip(&config.layers).enumerate() {
            let shape = d.kernel_shape();
            if values.len() != shape.len() {
                return Err(ModelIoError::CountMismatch {
                    what: "latent weights",
                    expected: shape.len(),
                    found: values.len(),
                });
            }
            let mask = PruneMask::regenerate(shape, config.scheme.for_layer(i))?;
            let weights = KernelTensor::from_vec(shape, values.into_iter().map(f64::from).collect())?;
            out.push(LatentWeights::new(weights, mask).map_err(|e| ModelIoError::Malformed(e.to_string()))?);
        }
        Some(out)
    } else {
        None
    };
    let model = Model { config, bits, latents };
    model.validate()?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &Model) -> Result<(), ModelIoError> {
    Ok(std::fs::write(path, export(model)?)?)
}

pub fn load_model(path: &Path) -> Result<Model, ModelIoError> {
    import(&std::fs::read(path)?)
}

/// Float kernels as written by an external trainer:
///
/// ```text
/// "MXFW" | u32 layer_count
/// layer_count × (u32 out_maps | u32 in_maps | u32 height | u32 width
///                | out·in·height·width × f32, index ((ℓ·in + k)·height + λ)·width + ι)
/// ```
pub fn write_float_weights(kernels: &[KernelTensor]) -> Result<Vec<u8>, ModelIoError> {
    let mut out = Vec::new();
    out.extend_from_slice(&WEIGHTS_MAGIC);
    push_u32(&mut out, kernels.len())?;
    for k in kernels {
        let s = k.shape();
        for d in [s.out_maps, s.in_maps, s.height, s.width] {
            push_u32(&mut out, d)?;
        }
        for v in k.as_slice() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_float_weights(bytes: &[u8]) -> Result<Vec<KernelTensor>, ModelIoError> {
    let mut r = Reader::new(bytes);
    r.magic(WEIGHTS_MAGIC)?;
    let layers = r.u32("layer count")?;
    let mut out = Vec::new();
    for _ in 0..layers {
        let out_maps = r.u32("out maps")?;
        let in_maps = r.u32("in maps")?;
        let height = r.u32("height")?;
        let width = r.u32("width")?;
        let shape = KernelShape::new(width, height, in_maps, out_maps);
        let len = [out_maps, in_maps, height, width]
            .iter()
            .try_fold(1usize, |a, d| a.checked_mul(*d))
            .ok_or_else(|| ModelIoError::Malformed("kernel dimensions overflow".into()))?;
        let values = r.f32s(len, "kernel values")?;
        out.push(KernelTensor::from_vec(shape, values.into_iter().map(f64::from).collect())?);
    }
    r.finish("last kernel")?;
    Ok(out)
}

/// Latent weights from a float-weight file, checked against the config.
/// Values outside `[-1, 1]` are clipped; the count of clipped values is
/// returned alongside.
pub fn ingest_float_weights(bytes: &[u8], config: &NetworkConfig) -> Result<(Vec<LatentWeights>, usize), ModelIoError> {
    config.validate()?;
    let kernels = read_float_weights(bytes)?;
    if kernels.len() != config.layers.len() {
        return Err(ModelIoError::ShapeMismatch(format!(
            "file has {} layers, config has {}",
            kernels.len(),
            config.layers.len()
        )));
    }
    let mut clipped = 0;
    let mut out = Vec::new();
    for (i, (k, d)) in kernels.into_iter().zip(&config.layers).enumerate() {
        if k.shape() != d.kernel_shape() {
            return Err(ModelIoError::ShapeMismatch(format!(
                "layer '{}': file {:?} vs config {:?}",
                d.name,
                k.shape(),
                d.kernel_shape()
            )));
        }
        let mask = PruneMask::regenerate(k.shape(), config.scheme.for_layer(i))?;
        let (w, n) = LatentWeights::clipped(k, mask)?;
        clipped += n;
        out.push(w);
    }
    Ok((out, clipped))
}

/// Feature tensor file: `"MXFT" | u32 maps | u32 rows | u32 cols | f32 values`,
/// map-major, rows contiguous.
pub fn write_tensor(t: &FeatureTensor<f64>) -> Result<Vec<u8>, ModelIoError> {
    let mut out = Vec::new();
    out.extend_from_slice(&TENSOR_MAGIC);
    for d in [t.maps(), t.rows(), t.cols()] {
        push_u32(&mut out, d)?;
    }
    for v in t.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn read_tensor(bytes: &[u8]) -> Result<FeatureTensor<f64>, ModelIoError> {
    let mut r = Reader::new(bytes);
    r.magic(TENSOR_MAGIC)?;
    let maps = r.u32("maps")?;
    let rows = r.u32("rows")?;
    let cols = r.u32("cols")?;
    let len = maps
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| ModelIoError::Malformed("tensor dimensions overflow".into()))?;
    let values = r.f32s(len, "tensor values")?;
    r.finish("tensor values")?;
    Ok(FeatureTensor::from_vec(rows, cols, maps, values.into_iter().map(f64::from).collect())?)
}

#[cfg(test)]
mod tests;
