//! Layer-chain descriptions shared by footprint accounting, the simulator and
//! the model container.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fixed::FixedPointFormat;
use crate::mask::MaskScheme;
use crate::tensor::KernelShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelSize {
    #[serde(rename = "1x1")]
    OneByOne,
    #[serde(rename = "3x3")]
    ThreeByThree,
}

impl KernelSize {
    pub fn extent(self) -> usize {
        match self {
            KernelSize::OneByOne => 1,
            KernelSize::ThreeByThree => 3,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "1x1" => Some(KernelSize::OneByOne),
            "3x3" => Some(KernelSize::ThreeByThree),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub name: String,
    pub kernel: KernelSize,
    /// Spatial size of the (square) input maps.
    pub j_max: usize,
    pub k_max: usize,
    pub l_max: usize,
    pub stride: usize,
    /// Output maps computed in parallel.
    pub p: usize,
    pub fmt: FixedPointFormat,
}

impl LayerDescriptor {
    pub fn conv3x3(name: impl Into<String>, j_max: usize, k_max: usize, l_max: usize, p: usize) -> Self {
        Self {
            name: name.into(),
            kernel: KernelSize::ThreeByThree,
            j_max,
            k_max,
            l_max,
            stride: 1,
            p,
            fmt: FixedPointFormat::default(),
        }
    }

    pub fn kernel_shape(&self) -> KernelShape {
        KernelShape::square(self.kernel.extent(), self.k_max, self.l_max)
    }

    /// Spatial size of the maps this layer hands to the next one.
    pub fn output_j_max(&self) -> usize {
        self.j_max.div_ceil(self.stride)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("layer '{}': {msg}", self.name)));
        if self.j_max == 0 || self.k_max == 0 || self.l_max == 0 || self.p == 0 {
            return bad("dimensions must be at least 1".into());
        }
        if !matches!(self.stride, 1 | 2) {
            return bad(format!("stride must be 1 or 2, got {}", self.stride));
        }
        if self.p > self.l_max || self.l_max % self.p != 0 {
            return bad(format!("P = {} must divide l_max = {}", self.p, self.l_max));
        }
        if self.kernel == KernelSize::ThreeByThree && self.j_max < 3 {
            return bad(format!("3x3 windows need j_max >= 3, got {}", self.j_max));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub version: u16,
    pub scheme: MaskScheme,
    pub layers: Vec<LayerDescriptor>,
}

impl NetworkConfig {
    pub const VERSION: u16 = 1;

    pub fn new(layers: Vec<LayerDescriptor>) -> Self {
        Self {
            version: Self::VERSION,
            scheme: MaskScheme::Deterministic,
            layers,
        }
    }

    /// Checks every layer and the shape chain between consecutive layers.
    pub fn validate(&self) -> Result<(), Error> {
        for layer in &self.layers {
            layer.validate()?;
        }
        for pair in self.layers.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.l_max != b.k_max {
                return Err(Error::InvalidConfig(format!(
                    "'{}' produces {} maps but '{}' expects {}",
                    a.name, a.l_max, b.name, b.k_max
                )));
            }
            if a.output_j_max() != b.j_max {
                return Err(Error::InvalidConfig(format!(
                    "'{}' produces {}x{} maps but '{}' expects {}x{}",
                    a.name,
                    a.output_j_max(),
                    a.output_j_max(),
                    b.name,
                    b.j_max,
                    b.j_max
                )));
            }
            if a.fmt != b.fmt {
                return Err(Error::InvalidConfig(format!(
                    "'{}' and '{}' use different fixed-point formats",
                    a.name, b.name
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let net: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        net.validate()?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_checks() {
        let mut net = NetworkConfig::new(vec![
            LayerDescriptor::conv3x3("a", 16, 8, 16, 4),
            LayerDescriptor::conv3x3("b", 16, 16, 16, 16),
        ]);
        assert!(net.validate().is_ok());
        net.layers[1].k_max = 8;
        assert!(net.validate().is_err());
        net.layers[1].k_max = 16;
        net.layers[0].stride = 2;
        assert!(net.validate().is_err());
        net.layers[1].j_max = 8;
        assert!(net.validate().is_ok());
    }

    #[test]
    fn p_must_divide_outputs() {
        assert!(LayerDescriptor::conv3x3("x", 8, 4, 12, 8).validate().is_err());
        assert!(LayerDescriptor::conv3x3("x", 8, 4, 8, 16).validate().is_err());
        assert!(LayerDescriptor::conv3x3("x", 8, 4, 12, 6).validate().is_ok());
    }

    #[test]
    fn json_roundtrip() {
        let net = NetworkConfig::new(vec![LayerDescriptor::conv3x3("c", 32, 64, 64, 16)]);
        let back = NetworkConfig::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
        let bad = net.to_json().replace("\"total_bits\": 16", "\"total_bits\": 40");
        assert!(NetworkConfig::from_json(&bad).is_err());
    }
}
