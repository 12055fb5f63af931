//! Closed-form cycle counts.

use serde::Serialize;

use super::LayerConfig;

/// Copy, processing and writeback terms of one layer block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CycleTerms {
    pub copy: u64,
    pub processing: u64,
    pub writeback: u64,
}

impl CycleTerms {
    pub fn total(&self) -> u64 {
        self.copy + self.processing + self.writeback
    }
}

pub fn cycle_terms(cfg: &LayerConfig) -> CycleTerms {
    let (j, k, l, p) = (cfg.j_max as u64, cfg.k_max as u64, cfg.l_max as u64, cfg.p as u64);
    CycleTerms {
        copy: j * k,
        processing: j * k * l / p,
        writeback: j * l,
    }
}

/// Cycles for one layer block: `j·k + j·k·ℓ/P + j·ℓ`.
pub fn cc_eq2(cfg: &LayerConfig) -> u64 {
    cycle_terms(cfg).total()
}

/// Cycles for the full-window row-stationary baseline: `3·j²·k·ℓ/P`.
pub fn cc_eq3(cfg: &LayerConfig) -> u64 {
    let (j, k, l, p) = (cfg.j_max as u64, cfg.k_max as u64, cfg.l_max as u64, cfg.p as u64);
    3 * j * j * k * l / p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Speedup {
    /// Whole-formula ratio `cc_eq3 / cc_eq2`.
    pub exact_ratio: f64,
    /// `cc_eq3` over the processing term alone.
    pub processing_ratio: f64,
    /// `3·j_max`.
    pub asymptotic: u64,
}

pub fn speedup(cfg: &LayerConfig) -> Speedup {
    let base = cc_eq3(cfg) as f64;
    Speedup {
        exact_ratio: base / cc_eq2(cfg) as f64,
        processing_ratio: base / cycle_terms(cfg).processing as f64,
        asymptotic: 3 * cfg.j_max as u64,
    }
}

/// Cycle and timing summary of a pipeline of layer blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleReport {
    pub per_layer_cycles: Vec<u64>,
    pub latency_cycles: u64,
    pub bottleneck_cycles: u64,
    pub frequency_hz: f64,
    pub latency_seconds: f64,
    pub throughput_images_per_s: f64,
}

impl CycleReport {
    pub fn from_cycles(per_layer_cycles: Vec<u64>, latency_cycles: u64, bottleneck_cycles: u64, frequency_hz: f64) -> Self {
        Self {
            per_layer_cycles,
            latency_cycles,
            bottleneck_cycles,
            frequency_hz,
            latency_seconds: latency_cycles as f64 / frequency_hz,
            throughput_images_per_s: if bottleneck_cycles == 0 {
                0.0
            } else {
                frequency_hz / bottleneck_cycles as f64
            },
        }
    }

    /// Latency is the sum of the per-layer counts, throughput is set by the
    /// slowest layer.
    pub fn analytic(layers: &[LayerConfig], frequency_hz: f64) -> Self {
        let per_layer: Vec<u64> = layers.iter().map(cc_eq2).collect();
        let latency = per_layer.iter().sum();
        let bottleneck = per_layer.iter().copied().max().unwrap_or(0);
        Self::from_cycles(per_layer, latency, bottleneck, frequency_hz)
    }

    pub fn latency_us(&self) -> f64 {
        self.latency_seconds * 1e6
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,cycles\n");
        for (i, c) in self.per_layer_cycles.iter().enumerate() {
            s.push_str(&format!("{i},{c}\n"));
        }
        s.push_str(&format!(
            "# latency_cycles={},bottleneck_cycles={},frequency_hz={},latency_us={:.3},throughput_img_s={:.1}\n",
            self.latency_cycles,
            self.bottleneck_cycles,
            self.frequency_hz,
            self.latency_us(),
            self.throughput_images_per_s
        ));
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| layer | cycles |\n|---|---|\n");
        for (i, c) in self.per_layer_cycles.iter().enumerate() {
            s.push_str(&format!("| {i} | {c} |\n"));
        }
        s.push_str(&format!(
            "\nlatency: {} cycles = {:.2} µs at {:.0} MHz; bottleneck: {} cycles; throughput: {:.0} images/s\n",
            self.latency_cycles,
            self.latency_us(),
            self.frequency_hz / 1e6,
            self.bottleneck_cycles,
            self.throughput_images_per_s
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(j: usize, k: usize, l: usize, p: usize) -> LayerConfig {
        LayerConfig::new(j, k, l, p).unwrap()
    }

    #[test]
    fn formula_examples() {
        let c = cfg(32, 64, 64, 16);
        assert_eq!(
            cycle_terms(&c),
            CycleTerms {
                copy: 2048,
                processing: 8192,
                writeback: 2048
            }
        );
        assert_eq!(cc_eq2(&c), 12_288);
        assert_eq!(cc_eq3(&c), 786_432);
        let s = speedup(&c);
        assert_eq!(s.exact_ratio, 64.0);
        assert_eq!(s.processing_ratio, 96.0);
        assert_eq!(s.asymptotic, 96);

        assert_eq!(cc_eq2(&cfg(8, 256, 256, 64)), 12_288);
        let tiny = LayerConfig {
            j_max: 1,
            ..cfg(3, 4, 4, 4)
        };
        assert_eq!(cc_eq2(&tiny), 12);
        let unit = LayerConfig {
            j_max: 1,
            k_max: 1,
            l_max: 1,
            p: 1,
            ..cfg(3, 1, 1, 1)
        };
        assert_eq!((cc_eq2(&unit), cc_eq3(&unit)), (3, 3));
        assert_eq!(speedup(&unit).exact_ratio, 1.0);
    }

    #[test]
    fn report_arithmetic() {
        let layers = vec![cfg(16, 128, 128, 64); 3];
        let r = CycleReport::analytic(&layers, 240e6);
        assert_eq!(r.latency_cycles, 24_576);
        assert_eq!(r.bottleneck_cycles, 8_192);
        assert!((r.latency_us() - 102.4).abs() < 1e-9);
        assert!((r.throughput_images_per_s - 29_296.875).abs() < 1e-6);
        let empty = CycleReport::analytic(&[], 1e6);
        assert_eq!(empty.latency_cycles, 0);
        assert_eq!(empty.throughput_images_per_s, 0.0);
    }

    proptest! {
        #[test]
        fn processing_ratio_is_three_j(j in 3usize..128, k in 1usize..600, groups in 1usize..16, p in 1usize..64) {
            let c = cfg(j, k, groups * p, p);
            let s = speedup(&c);
            prop_assert_eq!(cc_eq3(&c), 3 * j as u64 * cycle_terms(&c).processing);
            prop_assert_eq!(s.processing_ratio, 3.0 * j as f64);
        }

        #[test]
        fn adding_a_layer_never_helps(layers in proptest::collection::vec((3usize..40, 1usize..64, 1usize..8, 1usize..8), 1..6)) {
            let cfgs: Vec<_> = layers.iter().map(|(j, k, g, p)| cfg(*j, *k, g * p, *p)).collect();
            let mut prev: Option<CycleReport> = None;
            for n in 1..=cfgs.len() {
                let r = CycleReport::analytic(&cfgs[..n], 200e6);
                prop_assert_eq!(r.latency_cycles, r.per_layer_cycles.iter().sum::<u64>());
                if let Some(p) = prev {
                    prop_assert!(r.throughput_images_per_s <= p.throughput_images_per_s);
                    prop_assert!(r.latency_cycles > p.latency_cycles);
                }
                prev = Some(r);
            }
        }
    }
}
