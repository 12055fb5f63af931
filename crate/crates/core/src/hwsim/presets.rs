//! Built-in ResNet18/CIFAR10 layer configurations and the latency/outflow
//! report over them.
//!
//! ResNet18 on 32×32 inputs runs its 64, 128, 256 and 512-channel stages on
//! 32×32, 16×16, 8×8 and 4×4 maps respectively; that is the only geometry
//! the presets add to the published rows.

use serde::Serialize;

use super::model::{speedup, CycleReport};
use super::LayerConfig;

/// Spatial size of a ResNet18/CIFAR10 stage by its channel count.
pub fn resnet18_j_max(channels: usize) -> Option<usize> {
    match channels {
        64 => Some(32),
        128 => Some(16),
        256 => Some(8),
        512 => Some(4),
        _ => None,
    }
}

/// One row of the published FPGA measurements.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Row {
    /// Short identifier, e.g. `3xconv128-p64`.
    pub key: &'static str,
    /// Display name, e.g. `3×Conv128-128`.
    pub name: String,
    pub layers: Vec<LayerConfig>,
    pub reported_latency_us: f64,
    pub reported_outflow: f64,
}

impl Table2Row {
    pub fn frequency_hz(&self) -> f64 {
        self.layers[0].frequency_hz
    }

    pub fn p(&self) -> usize {
        self.layers[0].p
    }
}

fn row(key: &'static str, count: usize, channels: usize, p: usize, mhz: f64, latency_us: f64, outflow: f64) -> Table2Row {
    let j = resnet18_j_max(channels).expect("ResNet18 stage");
    let cfg = LayerConfig::new(j, channels, channels, p)
        .expect("preset is valid")
        .with_frequency(mhz * 1e6);
    let name = if count == 1 {
        format!("Conv{channels}-{channels}")
    } else {
        format!("{count}×Conv{channels}-{channels}")
    };
    Table2Row {
        key,
        name,
        layers: vec![cfg; count],
        reported_latency_us: latency_us,
        reported_outflow: outflow,
    }
}

/// The seven measured configurations with their reported latency (µs) and
/// outflow (images/s).
pub fn table2_rows() -> Vec<Table2Row> {
    vec![
        row("conv64", 1, 64, 16, 240.0, 52.0, 19230.0),
        row("4xconv64", 4, 64, 16, 240.0, 208.0, 19230.0),
        row("3xconv128-p32", 3, 128, 32, 240.0, 154.8, 19379.0),
        row("3xconv128-p64", 3, 128, 64, 240.0, 103.2, 29069.0),
        row("3xconv256-p64", 3, 256, 64, 250.0, 147.3, 20366.0),
        row("3xconv256-p128", 3, 256, 128, 218.0, 112.8, 26595.0),
        row("3xconv512", 3, 512, 128, 208.0, 177.0, 16949.0),
    ]
}

pub fn find_row(key: &str) -> Option<Table2Row> {
    table2_rows().into_iter().find(|r| r.key.eq_ignore_ascii_case(key))
}

/// Derived figures for one row next to the reported ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Line {
    pub key: String,
    pub name: String,
    pub p: usize,
    pub frequency_mhz: f64,
    pub latency_cycles: u64,
    pub latency_us: f64,
    pub outflow: f64,
    pub reported_latency_us: f64,
    pub reported_outflow: f64,
    /// Relative error of the derived latency against the reported one.
    pub latency_rel_err: f64,
    pub outflow_rel_err: f64,
    /// Baseline/proposed cycle ratio for one block, whole formula.
    pub speedup_exact: f64,
    /// Baseline cycles over the processing term alone (`3·j_max`).
    pub speedup_processing: f64,
}

impl Table2Line {
    pub fn from_report(row: &Table2Row, report: &CycleReport) -> Self {
        let s = speedup(&row.layers[0]);
        Self {
            key: row.key.to_string(),
            name: row.name.clone(),
            p: row.p(),
            frequency_mhz: row.frequency_hz() / 1e6,
            latency_cycles: report.latency_cycles,
            latency_us: report.latency_us(),
            outflow: report.throughput_images_per_s,
            reported_latency_us: row.reported_latency_us,
            reported_outflow: row.reported_outflow,
            latency_rel_err: (report.latency_us() - row.reported_latency_us).abs() / row.reported_latency_us,
            outflow_rel_err: (report.throughput_images_per_s - row.reported_outflow).abs() / row.reported_outflow,
            speedup_exact: s.exact_ratio,
            speedup_processing: s.processing_ratio,
        }
    }
}

/// Analytical report over the given rows.
pub fn table2_report(rows: &[Table2Row]) -> Vec<Table2Line> {
    rows.iter()
        .map(|r| Table2Line::from_report(r, &CycleReport::analytic(&r.layers, r.frequency_hz())))
        .collect()
}

const HEADER: [&str; 12] = [
    "row",
    "P",
    "MHz",
    "cycles",
    "latency_us",
    "reported_latency_us",
    "latency_err_pct",
    "images_per_s",
    "reported_images_per_s",
    "outflow_err_pct",
    "speedup_exact",
    "speedup_processing",
];

fn cells(l: &Table2Line) -> [String; 12] {
    [
        l.name.clone(),
        l.p.to_string(),
        format!("{:.0}", l.frequency_mhz),
        l.latency_cycles.to_string(),
        format!("{:.2}", l.latency_us),
        format!("{:.1}", l.reported_latency_us),
        format!("{:.2}", 100.0 * l.latency_rel_err),
        format!("{:.0}", l.outflow),
        format!("{:.0}", l.reported_outflow),
        format!("{:.2}", 100.0 * l.outflow_rel_err),
        format!("{:.2}", l.speedup_exact),
        format!("{:.0}", l.speedup_processing),
    ]
}

pub fn render_markdown(lines: &[Table2Line]) -> String {
    let mut s = format!("| {} |\n", HEADER.join(" | "));
    s.push_str(&format!("|{}\n", "---|".repeat(HEADER.len())));
    for l in lines {
        s.push_str(&format!("| {} |\n", cells(l).join(" | ")));
    }
    s
}

pub fn render_csv(lines: &[Table2Line]) -> String {
    let mut s = format!("{}\n", HEADER.join(","));
    for l in lines {
        s.push_str(&format!("{}\n", cells(l).join(",")));
    }
    s
}
