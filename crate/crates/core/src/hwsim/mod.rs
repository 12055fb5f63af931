//! Cycle-level simulator of the pipelined layer-block architecture.
//!
//! [`LayerBlockState`] models a single block, [`run_pipeline`] chains blocks
//! so that layer `t` writes its outputs straight into the input BRAM of layer
//! `t + 1`, and [`model`] holds the closed-form counts the simulation is
//! checked against.

mod block;
mod bram;
pub mod model;
pub mod presets;

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::binary::BinaryWeightPlane;
use crate::conv::{conv2d_fixed, relu, repad_columns, repad_offset, ConvConfig, OpCounters};
use crate::error::Error;
use crate::fixed::{FixedPointFormat, Fx};
use crate::network::{KernelSize, LayerDescriptor};
use crate::tensor::FeatureTensor;

pub use block::{BlockStats, LayerBlockState, Phase, Signals, Tick, WritebackRow};
pub use bram::{BramModel, Port};
pub use model::{cc_eq2, cc_eq3, cycle_terms, speedup, CycleReport, CycleTerms, Speedup};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid layer configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{bram}: second {port:?} access in cycle {cycle}")]
    PortConflict { bram: String, cycle: u64, port: Port },
    #[error("{bram}: row {row} beyond depth {depth}")]
    BramBounds { bram: String, row: usize, depth: usize },
    #[error("input bank {bank} not available for image {image}")]
    NextLayerBusy { image: usize, bank: usize },
    #[error("pipeline made no progress by cycle {0}")]
    Deadlock(u64),
    #[error("trace output failed: {0}")]
    Trace(String),
    #[error(transparent)]
    Core(#[from] Error),
}

/// Static configuration of one layer block (3×3 kernels, square maps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerConfig {
    /// Input maps are `j_max × j_max`.
    pub j_max: usize,
    pub k_max: usize,
    pub l_max: usize,
    /// Registers, i.e. output maps computed in parallel.
    pub p: usize,
    pub stride: usize,
    pub fmt: FixedPointFormat,
    pub frequency_hz: f64,
}

impl LayerConfig {
    pub const DEFAULT_FREQUENCY_HZ: f64 = 200e6;

    pub fn new(j_max: usize, k_max: usize, l_max: usize, p: usize) -> Result<Self, SimError> {
        let cfg = Self {
            j_max,
            k_max,
            l_max,
            p,
            stride: 1,
            fmt: FixedPointFormat::default(),
            frequency_hz: Self::DEFAULT_FREQUENCY_HZ,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_stride(self, stride: usize) -> Self {
        Self { stride, ..self }
    }

    pub fn with_frequency(self, frequency_hz: f64) -> Self {
        Self { frequency_hz, ..self }
    }

    pub fn with_format(self, fmt: FixedPointFormat) -> Self {
        Self { fmt, ..self }
    }

    pub fn from_descriptor(d: &LayerDescriptor, frequency_hz: f64) -> Result<Self, SimError> {
        if d.kernel != KernelSize::ThreeByThree {
            return Err(SimError::Config(format!("layer '{}': layer blocks only run 3x3 kernels", d.name)));
        }
        let cfg = Self {
            j_max: d.j_max,
            k_max: d.k_max,
            l_max: d.l_max,
            p: d.p,
            stride: d.stride,
            fmt: d.fmt,
            frequency_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.j_max < 3 {
            return bad(format!("j_max must be at least 3 for 3x3 windows, got {}", self.j_max));
        }
        if self.k_max == 0 || self.l_max == 0 || self.p == 0 {
            return bad("k_max, l_max and P must be at least 1".into());
        }
        if self.p > self.l_max || self.l_max % self.p != 0 {
            return bad(format!("P = {} must divide l_max = {}", self.p, self.l_max));
        }
        if !matches!(self.stride, 1 | 2) {
            return bad(format!("stride must be 1 or 2, got {}", self.stride));
        }
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            return bad(format!("frequency must be positive, got {}", self.frequency_hz));
        }
        Ok(())
    }

    /// Lanes of a BRAM2 row: the full row, or half of it after decimation.
    pub fn bram2_width(&self) -> usize {
        self.j_max.div_ceil(self.stride)
    }

    /// Lanes of an output row (`R' = j_max - 2` before striding).
    pub fn out_width(&self) -> usize {
        (self.j_max - 2).div_ceil(self.stride)
    }

    pub fn out_rows(&self) -> usize {
        self.j_max.div_ceil(self.stride)
    }

    pub fn conv_config(&self) -> ConvConfig {
        ConvConfig::hw_window(self.stride)
    }

    /// Checks that `next` can consume this layer's output.
    pub fn check_feeds(&self, next: &LayerConfig) -> Result<(), SimError> {
        if next.k_max != self.l_max || next.j_max != self.out_rows() || next.fmt != self.fmt {
            return Err(SimError::Shape(format!(
                "layer producing {} maps of {}x{} ({}) cannot feed a layer expecting {} maps of {}x{} ({})",
                self.l_max,
                self.out_rows(),
                self.out_rows(),
                self.fmt,
                next.k_max,
                next.j_max,
                next.j_max,
                next.fmt
            )));
        }
        Ok(())
    }
}

fn to_rows(x: &FeatureTensor<Fx>, cfg: &LayerConfig) -> Result<Vec<Vec<i32>>, SimError> {
    if x.shape() != [cfg.j_max, cfg.j_max, cfg.k_max] {
        return Err(SimError::Shape(format!(
            "input {:?} for a layer expecting {}x{}x{}",
            x.shape(),
            cfg.j_max,
            cfg.j_max,
            cfg.k_max
        )));
    }
    if let Some(v) = x.as_slice().iter().find(|v| v.format() != cfg.fmt) {
        return Err(Error::FormatMismatch {
            left: v.format().to_string(),
            right: cfg.fmt.to_string(),
        }
        .into());
    }
    let mut rows = Vec::with_capacity(cfg.k_max * cfg.j_max);
    for k in 0..cfg.k_max {
        for i in 0..cfg.j_max {
            rows.push(x.row(i, k).iter().map(|v| v.raw()).collect());
        }
    }
    Ok(rows)
}

struct Collector {
    rows: usize,
    cols: usize,
    maps: usize,
    pre: Vec<i32>,
    post: Vec<i32>,
}

impl Collector {
    fn new(cfg: &LayerConfig) -> Self {
        let n = cfg.out_rows() * cfg.out_width() * cfg.l_max;
        Self {
            rows: cfg.out_rows(),
            cols: cfg.out_width(),
            maps: cfg.l_max,
            pre: vec![0; n],
            post: vec![0; n],
        }
    }

    fn store(&mut self, r: &WritebackRow) {
        let start = (r.map * self.rows + r.row) * self.cols;
        self.pre[start..start + self.cols].copy_from_slice(&r.pre_activation);
        self.post[start..start + self.cols].copy_from_slice(&r.values);
    }

    fn finish(self, fmt: FixedPointFormat) -> (FeatureTensor<Fx>, FeatureTensor<Fx>) {
        let conv = |v: Vec<i32>| {
            let data = v.into_iter().map(|r| fmt.from_raw(r).expect("register in range")).collect();
            FeatureTensor::from_vec(self.rows, self.cols, self.maps, data).expect("collector shape")
        };
        (conv(self.pre), conv(self.post))
    }
}

/// Result of pushing a stream of images through a pipeline.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: CycleReport,
    /// Last layer's output per image, after ReLU.
    pub outputs: Vec<FeatureTensor<Fx>>,
    /// Last layer's register contents per image, before ReLU.
    pub pre_activation: Vec<FeatureTensor<Fx>>,
    pub block_stats: Vec<BlockStats>,
    /// Cycle in which each image left the last layer.
    pub completions: Vec<u64>,
}

/// Simulates `images` flowing through the given layer blocks.
///
/// Images are placed in the first block's input BRAM for free as soon as a
/// bank is available; everything after that is clocked. With `trace` set,
/// one CSV line per block and cycle is written.
pub fn run_pipeline(
    layers: &[(LayerConfig, BinaryWeightPlane)],
    images: &[FeatureTensor<Fx>],
    mut trace: Option<&mut dyn Write>,
) -> Result<PipelineRun, SimError> {
    let Some((first, _)) = layers.first() else {
        return Err(SimError::Config("pipeline has no layers".into()));
    };
    let frequency = first.frequency_hz;
    for pair in layers.windows(2) {
        pair[0].0.check_feeds(&pair[1].0)?;
    }
    if let Some((c, _)) = layers.iter().find(|(c, _)| c.frequency_hz != frequency) {
        return Err(SimError::Config(format!(
            "all blocks share one clock; got {} Hz and {} Hz",
            frequency, c.frequency_hz
        )));
    }
    let inputs = images.iter().map(|x| to_rows(x, first)).collect::<Result<Vec<_>, _>>()?;
    let mut blocks = layers
        .iter()
        .enumerate()
        .map(|(t, (cfg, bits))| LayerBlockState::new(&format!("layer{t}"), *cfg, bits.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let last_cfg = layers[layers.len() - 1].0;
    let mut sinks: Vec<Collector> = images.iter().map(|_| Collector::new(&last_cfg)).collect();
    let mut completions = Vec::with_capacity(images.len());
    let mut first_image_cycles = vec![0u64; blocks.len()];
    let limit = (layers.iter().map(|(c, _)| cc_eq2(c)).sum::<u64>() + 16) * (images.len() as u64 + 2);

    if let Some(out) = trace.as_deref_mut() {
        writeln!(out, "cycle,layer,phase,fi,enable_s,itter_done").map_err(|e| SimError::Trace(e.to_string()))?;
    }

    let mut fed = 0;
    let mut cycle = 0u64;
    while completions.len() < images.len() {
        if cycle > limit {
            return Err(SimError::Deadlock(cycle));
        }
        while fed < inputs.len() && blocks[0].bank_free(fed) {
            blocks[0].preload(fed, &inputs[fed], cycle)?;
            fed += 1;
        }
        for t in 0..blocks.len() {
            let (head, tail) = blocks.split_at_mut(t + 1);
            let block = &mut head[t];
            let next = tail.first_mut();
            let downstream_free = next.as_ref().is_none_or(|n| n.bank_free(block.next_image()));
            let phase_before = block.phase();
            let tick = block.tick(cycle, downstream_free)?;
            let image = block.next_image().saturating_sub(1);
            match (&tick, next) {
                (Tick::Started(img), Some(n)) => n.reserve_bank(*img),
                (Tick::Wrote(row), Some(n)) => n.receive(cycle, row, repad_offset(block.config().stride))?,
                (Tick::Wrote(row), None) => sinks[row.image].store(row),
                _ => {}
            }
            let signals = block.signals();
            if signals.itter_done {
                if image == 0 {
                    first_image_cycles[t] = block.last_image_cycles().unwrap_or(0);
                }
                match tail.first_mut() {
                    Some(n) => n.seal(image, cycle + 1),
                    None => completions.push(cycle),
                }
            }
            if let Some(out) = trace.as_deref_mut() {
                let phase = match (&tick, phase_before) {
                    (Tick::Idle, _) => Phase::Idle,
                    (Tick::Started(_), _) => Phase::Copying,
                    (_, Phase::Idle) => Phase::Copying,
                    (_, p) => p,
                };
                writeln!(
                    out,
                    "{cycle},{t},{},{},{},{}",
                    phase.as_str(),
                    signals.fi as u8,
                    signals.enable_s as u8,
                    signals.itter_done as u8
                )
                .map_err(|e| SimError::Trace(e.to_string()))?;
            }
        }
        cycle += 1;
    }

    let latency = completions[0] + 1;
    let bottleneck = match completions.len() {
        0 | 1 => first_image_cycles.iter().copied().max().unwrap_or(0),
        n => completions[n - 1] - completions[n - 2],
    };
    let (pre_activation, outputs) = sinks.into_iter().map(|s| s.finish(last_cfg.fmt)).unzip();
    Ok(PipelineRun {
        report: CycleReport::from_cycles(first_image_cycles, latency, bottleneck, frequency),
        outputs,
        pre_activation,
        block_stats: blocks.iter().map(|b| b.stats()).collect(),
        completions,
    })
}

/// Result of running one image through one layer block.
#[derive(Debug, Clone)]
pub struct LayerRun {
    pub outputs: FeatureTensor<Fx>,
    pub pre_activation: FeatureTensor<Fx>,
    pub cycles: u64,
    pub stats: BlockStats,
}

pub fn run_layer(inputs: &FeatureTensor<Fx>, cfg: &LayerConfig, bits: &BinaryWeightPlane) -> Result<LayerRun, SimError> {
    let mut run = run_pipeline(&[(*cfg, bits.clone())], std::slice::from_ref(inputs), None)?;
    Ok(LayerRun {
        outputs: run.outputs.remove(0),
        pre_activation: run.pre_activation.remove(0),
        cycles: run.report.latency_cycles,
        stats: run.block_stats[0],
    })
}

/// Functional model of the same chain: per layer the fixed-point pruned
/// binary convolution, ReLU, and re-padding to the next layer's width.
/// Returns every layer's output (after ReLU, before re-padding).
pub fn reference_outputs(
    layers: &[(LayerConfig, BinaryWeightPlane)],
    image: &FeatureTensor<Fx>,
) -> Result<(Vec<FeatureTensor<Fx>>, OpCounters), SimError> {
    let mut ops = OpCounters::default();
    let mut outs: Vec<FeatureTensor<Fx>> = Vec::with_capacity(layers.len());
    let mut x = image.clone();
    for (t, (cfg, bits)) in layers.iter().enumerate() {
        if t > 0 {
            layers[t - 1].0.check_feeds(cfg)?;
            let prev = &outs[t - 1];
            x = repad_columns(prev, cfg.j_max, repad_offset(layers[t - 1].0.stride), cfg.fmt.zero());
        }
        let (y, o) = conv2d_fixed(&x, bits, &cfg.conv_config(), cfg.fmt)?;
        ops += o;
        outs.push(relu(&y));
    }
    Ok((outs, ops))
}
