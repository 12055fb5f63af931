use std::fs::File;
use std::io::{BufWriter, Write};

use mxconv::hwsim::presets::find_row;
use mxconv::hwsim::{reference_outputs, run_pipeline, LayerConfig};
use mxconv::model_io::read_tensor;
use mxconv::{import, BinaryWeightPlane, CycleReport, Model};
use serde_json::json;

use super::model::{preset_config, random_input};
use crate::error::{usage, CliError};
use crate::{Format, SimulateArgs};

/// Layer blocks of a model, clocked at `frequency_hz`.
pub fn model_layers(model: &Model, frequency_hz: f64) -> Result<Vec<(LayerConfig, BinaryWeightPlane)>, CliError> {
    if model.bits.len() != model.config.layers.len() {
        return Err(usage("the simulator needs packed weights (deterministic mask scheme)"));
    }
    model
        .config
        .layers
        .iter()
        .zip(&model.bits)
        .map(|(d, b)| Ok((LayerConfig::from_descriptor(d, frequency_hz)?, b.clone())))
        .collect()
}

pub fn run(a: SimulateArgs) -> Result<(), CliError> {
    let (model, default_hz) = match (&a.preset, &a.model) {
        (Some(key), _) => {
            let row = find_row(key).ok_or_else(|| usage(format!("unknown preset '{key}'")))?;
            (Model::random(preset_config(key)?, a.seed, false)?, row.frequency_hz())
        }
        (None, Some(path)) => (import(&super::read(path)?)?, 200e6),
        (None, None) => return Err(usage("give --preset or --model")),
    };
    let frequency_hz = match a.frequency {
        Some(mhz) if !(mhz > 0.0 && mhz.is_finite()) => return Err(usage(format!("--frequency {mhz} must be positive"))),
        Some(mhz) => mhz * 1e6,
        None => default_hz,
    };
    let mut layers = model_layers(&model, frequency_hz)?;
    if let Some(n) = a.layers {
        if n == 0 || n > layers.len() {
            return Err(usage(format!("--layers {n} out of range 1..={}", layers.len())));
        }
        layers.truncate(n);
    }
    if a.images == 0 {
        return Err(usage("--images must be at least 1"));
    }
    let fmt = layers[0].0.fmt;
    let images: Vec<_> = match &a.input {
        Some(p) => vec![read_tensor(&super::read(p)?)?.quantize(fmt); a.images],
        None => (0..a.images as u64)
            .map(|i| random_input(&model.config, a.seed.wrapping_add(i)).quantize(fmt))
            .collect(),
    };

    let mut trace = match &a.trace {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| anyhow::anyhow!("creating {}: {e}", p.display()))?)),
        None => None,
    };
    let mut run = run_pipeline(&layers, &images, trace.as_mut().map(|w| w as &mut dyn Write))?;
    if let Some(mut w) = trace {
        w.flush()?;
    }

    let configs: Vec<_> = layers.iter().map(|(c, _)| *c).collect();
    let analytic = CycleReport::analytic(&configs, frequency_hz);
    let mut checked = None;
    if a.check {
        if a.corrupt_output {
            let first = &mut run.outputs[0];
            let v = first.get(0, 0, 0)?;
            first.set(0, 0, 0, v.format().from_raw(v.raw() ^ 1)?)?;
        }
        for (i, (img, out)) in images.iter().zip(&run.outputs).enumerate() {
            let (refs, _) = reference_outputs(&layers, img)?;
            let expect = refs.last().expect("at least one layer");
            if expect != out {
                let diff = expect.raw().as_slice().iter().zip(out.raw().as_slice()).filter(|(a, b)| a != b).count();
                return Err(CliError::Verify(format!("image {i}: {diff} output values differ from the functional model")));
            }
        }
        if run.report.latency_cycles != analytic.latency_cycles {
            return Err(CliError::Verify(format!(
                "simulated latency {} cycles, formula {}",
                run.report.latency_cycles, analytic.latency_cycles
            )));
        }
        checked = Some(images.len());
    }

    let r = &run.report;
    let text = match a.format {
        Format::Csv => r.to_csv(),
        Format::Json => super::json(&json!({
            "report": r,
            "analytic": analytic,
            "blocks": run.block_stats,
            "checked_images": checked,
        }))?,
        Format::Text | Format::Markdown => {
            let mut s = r.to_markdown();
            s.push_str(&format!(
                "formula: {} cycles latency, {} cycles bottleneck\n",
                analytic.latency_cycles, analytic.bottleneck_cycles
            ));
            for (t, b) in run.block_stats.iter().enumerate() {
                s.push_str(&format!(
                    "layer {t}: copy {} / processing {} / writeback {} cycles, FI {} Enable_s {} Itter_done {}, saturations {}\n",
                    b.copy_cycles, b.processing_cycles, b.writeback_cycles, b.fi_pulses, b.enable_s_pulses, b.itter_done_pulses, b.saturations
                ));
            }
            if let Some(n) = checked {
                s.push_str(&format!("check: {n} image(s) bit-exact against the functional model\n"));
            }
            s
        }
    };
    super::emit(None, &text)
}
