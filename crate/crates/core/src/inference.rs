//! Whole-network forward passes over a stored model.

use serde::{Deserialize, Serialize};

use crate::conv::{conv2d_dense_counted, conv2d_pruned_binary_counted, relu, repad_columns, repad_offset, ConvConfig, OpCounters};
use crate::error::Error;
use crate::model_io::Model;
use crate::network::{KernelSize, LayerDescriptor};
use crate::tensor::FeatureTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Dense float convolution with the `±1`/0 sign kernels.
    Float,
    /// Sign-selected add/subtract on floats.
    Binary,
    /// Sign-selected add/subtract in each layer's fixed-point format.
    Fixed,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "float" => Ok(Engine::Float),
            "binary" => Ok(Engine::Binary),
            "fixed" => Ok(Engine::Fixed),
            _ => Err(Error::InvalidConfig(format!("unknown engine '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRun {
    /// Output of every layer after ReLU, in layer order.
    pub layers: Vec<FeatureTensor<f64>>,
    pub ops: OpCounters,
}

impl InferenceRun {
    pub fn output(&self) -> &FeatureTensor<f64> {
        self.layers.last().expect("models have at least one layer")
    }
}

/// Geometry of one layer: 3×3 layers use hardware windows, 1×1 layers keep
/// the map size.
pub fn layer_conv_config(d: &LayerDescriptor) -> ConvConfig {
    match d.kernel {
        KernelSize::ThreeByThree => ConvConfig::hw_window(d.stride),
        KernelSize::OneByOne => ConvConfig::same(1, d.stride),
    }
}

/// Brings a layer output to the width the next layer expects.
fn to_next<T: Copy>(y: &FeatureTensor<T>, prev: &LayerDescriptor, next: &LayerDescriptor, zero: T) -> FeatureTensor<T> {
    if y.cols() == next.j_max {
        y.clone()
    } else {
        repad_columns(y, next.j_max, repad_offset(prev.stride), zero)
    }
}

pub fn infer(model: &Model, input: &FeatureTensor<f64>, engine: Engine) -> Result<InferenceRun, Error> {
    let layers = &model.config.layers;
    let first = layers.first().ok_or_else(|| Error::InvalidConfig("model has no layers".into()))?;
    if input.shape() != [first.j_max, first.j_max, first.k_max] {
        return Err(Error::ShapeMismatch(format!(
            "input is {:?}, first layer expects [{}, {}, {}]",
            input.shape(),
            first.j_max,
            first.j_max,
            first.k_max
        )));
    }
    let mut ops = OpCounters::default();
    let mut outs = Vec::with_capacity(layers.len());
    match engine {
        Engine::Float => {
            let kernels = model.sign_kernels();
            let mut x = input.clone();
            for (t, d) in layers.iter().enumerate() {
                if t > 0 {
                    x = to_next(&outs[t - 1], &layers[t - 1], d, 0.0);
                }
                outs.push(relu(&conv2d_dense_counted(&x, &kernels[t], &layer_conv_config(d), &mut ops)?));
            }
        }
        Engine::Binary | Engine::Fixed => {
            if model.bits.len() != layers.len() {
                return Err(Error::UnsupportedMask(format!(
                    "{:?} models have no packed weights for the {engine:?} engine",
                    model.config.scheme
                )));
            }
            if engine == Engine::Binary {
                let mut x = input.clone();
                for (t, d) in layers.iter().enumerate() {
                    if t > 0 {
                        x = to_next(&outs[t - 1], &layers[t - 1], d, 0.0);
                    }
                    let y = conv2d_pruned_binary_counted(&x, &model.bits[t], &layer_conv_config(d), &mut ops)?;
                    outs.push(relu(&y));
                }
            } else {
                let fmt = first.fmt;
                let mut fixed = Vec::with_capacity(layers.len());
                let mut x = input.quantize(fmt);
                for (t, d) in layers.iter().enumerate() {
                    if t > 0 {
                        x = to_next(&fixed[t - 1], &layers[t - 1], d, fmt.zero());
                    }
                    let y = conv2d_pruned_binary_counted(&x, &model.bits[t], &layer_conv_config(d), &mut ops)?;
                    fixed.push(relu(&y));
                }
                outs = fixed.iter().map(|y| y.to_f64()).collect();
            }
        }
    }
    Ok(InferenceRun { layers: outs, ops })
}
