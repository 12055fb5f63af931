//! Browser demo bindings. Every export takes plain numbers and returns a JSON
//! string; the `*_json` functions underneath are ordinary Rust and are tested
//! natively.

use mxconv::hwsim::{cycle_terms, run_pipeline, speedup, LayerConfig};
use mxconv::{build_mask, cc_eq2, cc_eq3, coverage_stats, random_mask, LayerDescriptor, Model, NetworkConfig};
use mxconv::{FeatureTensor, PruneMask};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest configurations the page will simulate cycle by cycle.
const MAX_SIM_CYCLES: u64 = 2_000_000;
const MAX_MASK_SLICES: usize = 64 * 64;

#[derive(Debug, Serialize)]
struct MaskView {
    width: usize,
    height: usize,
    in_maps: usize,
    out_maps: usize,
    /// `grid[ℓ][k]` is the kept position index `λ·width + ι` per slice, or
    /// every kept index for random masks.
    grid: Vec<Vec<Vec<usize>>>,
    histogram: Vec<usize>,
    positions_used: usize,
    kept_fraction: f64,
    removal_fraction: f64,
}

pub fn mask_json(width: usize, in_maps: usize, out_maps: usize, removed: Option<usize>, seed: u64) -> Result<String, String> {
    if in_maps * out_maps > MAX_MASK_SLICES {
        return Err(format!("at most {MAX_MASK_SLICES} slices"));
    }
    let mask: PruneMask = match removed {
        None => build_mask(width, width, in_maps, out_maps),
        Some(m) => random_mask(width, width, in_maps, out_maps, m, seed).map_err(|e| e.to_string())?,
    };
    let grid = (0..out_maps)
        .map(|l| {
            (0..in_maps)
                .map(|k| mask.kept_in_slice(k, l).into_iter().map(|(i, la)| la * width + i).collect())
                .collect()
        })
        .collect();
    let stats = coverage_stats(&mask);
    let view = MaskView {
        width,
        height: width,
        in_maps,
        out_maps,
        grid,
        histogram: stats.histogram,
        positions_used: stats.positions_used,
        kept_fraction: mask.kept_fraction(),
        removal_fraction: mask.removal_fraction(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct CyclePoint {
    p: usize,
    copy: u64,
    processing: u64,
    writeback: u64,
    total: u64,
    baseline: u64,
    exact_ratio: f64,
    processing_ratio: f64,
    latency_us: f64,
}

/// Cycle terms for every divisor `P` of `ℓ_max`.
pub fn cycles_json(j_max: usize, k_max: usize, l_max: usize, frequency_mhz: f64) -> Result<String, String> {
    if !(frequency_mhz > 0.0) {
        return Err("frequency must be positive".into());
    }
    let points = (1..=l_max)
        .filter(|p| l_max % p == 0)
        .map(|p| {
            let cfg = LayerConfig::new(j_max, k_max, l_max, p).map_err(|e| e.to_string())?;
            let terms = cycle_terms(&cfg);
            let s = speedup(&cfg);
            Ok(CyclePoint {
                p,
                copy: terms.copy,
                processing: terms.processing,
                writeback: terms.writeback,
                total: cc_eq2(&cfg),
                baseline: cc_eq3(&cfg),
                exact_ratio: s.exact_ratio,
                processing_ratio: s.processing_ratio,
                latency_us: cc_eq2(&cfg) as f64 / frequency_mhz,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize, PartialEq)]
struct Segment {
    layer: usize,
    phase: String,
    start: u64,
    end: u64,
}

#[derive(Debug, Serialize)]
struct Timeline {
    segments: Vec<Segment>,
    latency_cycles: u64,
    bottleneck_cycles: u64,
    total_cycles: u64,
    completions: Vec<u64>,
}

/// Phase timeline of `layers` identical blocks processing `images` images.
pub fn timeline_json(layers: usize, j_max: usize, k_max: usize, l_max: usize, p: usize, images: usize, seed: u64) -> Result<String, String> {
    if layers == 0 || images == 0 {
        return Err("need at least one layer and one image".into());
    }
    let cfg = LayerConfig::new(j_max, k_max, l_max, p).map_err(|e| e.to_string())?;
    let budget = cc_eq2(&cfg) * (layers + images) as u64;
    if budget > MAX_SIM_CYCLES {
        return Err(format!("about {budget} cycles; keep it under {MAX_SIM_CYCLES}"));
    }
    let descriptors = (0..layers)
        .map(|i| LayerDescriptor::conv3x3(&format!("block{i}"), j_max, k_max, l_max, p))
        .collect();
    let model = Model::random(NetworkConfig::new(descriptors), seed, false).map_err(|e| e.to_string())?;
    let blocks: Vec<_> = model.bits.iter().map(|b| (cfg, b.clone())).collect();
    let fmt = cfg.fmt;
    let images: Vec<_> = (0..images)
        .map(|n| FeatureTensor::from_fn(j_max, j_max, k_max, |i, j, k| ((i + 2 * j + 3 * k + n) % 7) as f64 / 4.0 - 0.75).quantize(fmt))
        .collect();

    let mut trace = Vec::new();
    let run = run_pipeline(&blocks, &images, Some(&mut trace)).map_err(|e| e.to_string())?;
    let text = String::from_utf8(trace).map_err(|e| e.to_string())?;
    let mut open: Vec<Option<Segment>> = (0..layers).map(|_| None).collect();
    let mut segments = Vec::new();
    let mut total_cycles = 0;
    for line in text.lines().skip(1) {
        let mut f = line.split(',');
        let (Some(c), Some(t), Some(phase)) = (f.next(), f.next(), f.next()) else {
            continue;
        };
        let (cycle, t): (u64, usize) = (c.parse().map_err(|_| "bad trace")?, t.parse().map_err(|_| "bad trace")?);
        total_cycles = total_cycles.max(cycle + 1);
        match &mut open[t] {
            Some(s) if s.phase == phase && s.end == cycle => s.end = cycle + 1,
            slot => {
                if let Some(done) = slot.take() {
                    segments.push(done);
                }
                *slot = Some(Segment { layer: t, phase: phase.to_string(), start: cycle, end: cycle + 1 });
            }
        }
    }
    segments.extend(open.into_iter().flatten());
    segments.retain(|s| s.phase != "idle");
    segments.sort_by_key(|s| (s.layer, s.start));
    let timeline = Timeline {
        segments,
        latency_cycles: run.report.latency_cycles,
        bottleneck_cycles: run.report.bottleneck_cycles,
        total_cycles,
        completions: run.completions,
    };
    serde_json::to_string(&timeline).map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Mask grid and coverage; `removed < 0` selects the deterministic rule.
#[wasm_bindgen]
pub fn mask_view(width: usize, in_maps: usize, out_maps: usize, removed: i32, seed: u32) -> Result<String, JsError> {
    js(mask_json(width, in_maps, out_maps, usize::try_from(removed).ok(), seed as u64))
}

#[wasm_bindgen]
pub fn cycle_model(j_max: usize, k_max: usize, l_max: usize, frequency_mhz: f64) -> Result<String, JsError> {
    js(cycles_json(j_max, k_max, l_max, frequency_mhz))
}

#[wasm_bindgen]
pub fn layer_timeline(layers: usize, j_max: usize, k_max: usize, l_max: usize, p: usize, images: usize, seed: u32) -> Result<String, JsError> {
    js(timeline_json(layers, j_max, k_max, l_max, p, images, seed as u64))
}
