//! Pruned, binarized convolution without multiplications, and a cycle-level
//! model of the pipelined layer-block hardware that runs it.
//!
//! Each `k×k` kernel slice keeps a single connection, chosen by a fixed rule
//! on the input-map index, and each kept weight is a sign bit. A convolution
//! then reduces to adding or subtracting shifted rows of the input maps.

pub mod binary;
pub mod conv;
pub mod error;
pub mod fixed;
pub mod hwsim;
pub mod inference;
pub mod mask;
pub mod model_io;
pub mod network;
pub mod tensor;
pub mod train;

pub use binary::{binarize, bc_update, memory_footprint, BinaryWeightPlane, LatentWeights, StorageScheme};
pub use conv::{conv2d_dense, conv2d_fixed, conv2d_pruned, conv2d_pruned_binary, relu, ConvConfig, OpCounters, Padding};
pub use error::Error;
pub use fixed::{FixedPointFormat, FixedPointValue, Fx, Overflow};
pub use hwsim::{cc_eq2, cc_eq3, run_layer, run_pipeline, CycleReport, LayerConfig, SimError};
pub use inference::{infer, Engine, InferenceRun};
pub use mask::{apply_mask, build_mask, coverage_stats, kept_position, random_mask, MaskScheme, PruneMask};
pub use model_io::{export, import, Model, ModelIoError};
pub use network::{KernelSize, LayerDescriptor, NetworkConfig};
pub use tensor::{FeatureTensor, KernelShape, KernelTensor};
