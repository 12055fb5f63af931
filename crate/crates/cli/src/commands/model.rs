use mxconv::binary::{footprint_bits, StorageScheme};
use mxconv::hwsim::presets::find_row;
use mxconv::model_io::{ingest_float_weights, read_tensor, write_tensor};
use mxconv::{export, import, infer as run_infer, Engine, FeatureTensor, LayerDescriptor, Model, NetworkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{usage, CliError};
use crate::{EngineArg, Format, InferArgs, InitArgs, QuantizeArgs};

pub fn load_config(path: &std::path::Path) -> Result<NetworkConfig, CliError> {
    let text = String::from_utf8(super::read(path)?).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(NetworkConfig::from_json(&text)?)
}

/// Network config of a built-in measurement preset.
pub fn preset_config(key: &str) -> Result<NetworkConfig, CliError> {
    let row = find_row(key).ok_or_else(|| usage(format!("unknown preset '{key}'")))?;
    let layers = row
        .layers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut d = LayerDescriptor::conv3x3(format!("{}-{i}", row.key), c.j_max, c.k_max, c.l_max, c.p);
            d.fmt = c.fmt;
            d
        })
        .collect();
    Ok(NetworkConfig::new(layers))
}

pub fn random_input(config: &NetworkConfig, seed: u64) -> FeatureTensor<f64> {
    let d = &config.layers[0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a7e);
    FeatureTensor::from_fn(d.j_max, d.j_max, d.k_max, |_, _, _| rng.gen_range(-1.0..1.0))
}

pub fn init(a: InitArgs) -> Result<(), CliError> {
    let config = match (&a.config, &a.preset) {
        (Some(p), _) => load_config(p)?,
        (None, Some(key)) => preset_config(key)?,
        (None, None) => return Err(usage("give --config or --preset")),
    };
    let model = Model::random(config, a.seed, a.keep_latent)?;
    super::write(&a.out, &export(&model)?)?;
    if let Some(p) = &a.input_out {
        super::write(p, &write_tensor(&random_input(&model.config, a.seed))?)?;
    }
    if let Some(p) = &a.config_out {
        super::write(p, model.config.to_json().as_bytes())?;
    }
    println!("wrote {} ({} layers)", a.out.display(), model.config.layers.len());
    Ok(())
}

fn footprint_report(config: &NetworkConfig) -> String {
    let full = footprint_bits(config, StorageScheme::Full32);
    let bc = footprint_bits(config, StorageScheme::Bc);
    let pruned = footprint_bits(config, StorageScheme::PrunedBc);
    format!(
        "weight storage: full32 {} bytes, bc {} bytes, pruned_bc {} bytes\n\
         compression full32/bc {:.2}, full32/pruned_bc {:.2}\n",
        full.div_ceil(8),
        bc.div_ceil(8),
        pruned.div_ceil(8),
        full as f64 / bc as f64,
        full as f64 / pruned as f64
    )
}

pub fn quantize(a: QuantizeArgs) -> Result<(), CliError> {
    let (model, clipped) = match (&a.model, &a.config, &a.weights) {
        (Some(path), _, _) => {
            let mut model = import(&super::read(path)?)?;
            if !a.keep_latent && !model.bits.is_empty() {
                model.latents = None;
            }
            (model, 0)
        }
        (None, Some(config), Some(weights)) => {
            let config = load_config(config)?;
            let (latents, clipped) = ingest_float_weights(&super::read(weights)?, &config)?;
            (Model::from_latents(config, latents, a.keep_latent)?, clipped)
        }
        _ => return Err(usage("give --model, or --config with --weights")),
    };
    super::write(&a.out, &export(&model)?)?;
    if clipped > 0 {
        eprintln!("warning: clipped {clipped} latent values into [-1, 1]");
    }
    print!("{}", footprint_report(&model.config));
    Ok(())
}

pub fn infer(a: InferArgs) -> Result<(), CliError> {
    let model = import(&super::read(&a.model)?)?;
    let input = read_tensor(&super::read(&a.input)?)?;
    let engine = match a.engine {
        EngineArg::Float => Engine::Float,
        EngineArg::Binary => Engine::Binary,
        EngineArg::Fixed => Engine::Fixed,
    };
    let run = run_infer(&model, &input, engine)?;
    if let Some(p) = &a.out {
        super::write(p, &write_tensor(run.output())?)?;
    }
    let ops = run.ops;
    let text = match a.format {
        Format::Json => super::json(&json!({
            "engine": engine,
            "output_shape": run.output().shape(),
            "ops": ops,
        }))?,
        Format::Csv => format!(
            "multiplications,additions,negations,saturations\n{},{},{},{}\n",
            ops.multiplications, ops.additions, ops.negations, ops.saturations
        ),
        Format::Text | Format::Markdown => format!(
            "engine {}, output {:?}\nmultiplications {}\nadditions {}\nnegations {}\nsaturations {}\n",
            format!("{engine:?}").to_lowercase(),
            run.output().shape(),
            ops.multiplications,
            ops.additions,
            ops.negations,
            ops.saturations
        ),
    };
    super::emit(None, &text)
}
