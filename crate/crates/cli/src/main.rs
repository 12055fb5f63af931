//! `mxconv`: masks, packed models, inference, cycle simulation, the FPGA
//! latency report and toy training from the command line.
//!
//! Exit codes: 0 success, 1 I/O or runtime failure, 2 usage, 3 verification
//! failure.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mxconv", version, about = "Pruned binary convolution engine and layer-block simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Summarise a connection mask.
    Mask(MaskArgs),
    /// Write a model with random weights for a config or preset.
    Init(InitArgs),
    /// Pack float weights (or repack a model) into a model blob.
    Quantize(QuantizeArgs),
    /// Run a model on an input tensor.
    Infer(InferArgs),
    /// Cycle-level simulation of the layer-block pipeline.
    Simulate(SimulateArgs),
    /// Derived latency and outflow tables.
    Report(ReportArgs),
    /// Train the toy network and print accuracy curves.
    TrainToy(TrainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Markdown,
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct MaskArgs {
    /// Kernel size, `3x3` or `1x1`.
    #[arg(long, default_value = "3x3")]
    kernel: String,
    #[arg(long)]
    kmax: usize,
    #[arg(long)]
    lmax: usize,
    /// Remove this many random positions per slice instead of using the
    /// deterministic rule.
    #[arg(long)]
    random_m: Option<usize>,
    #[arg(long, env = "MXCV_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct InitArgs {
    /// Network config (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in measurement preset, e.g. `conv64` or `3xconv128-p64`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, env = "MXCV_SEED", default_value_t = 0)]
    seed: u64,
    /// Store latent weights next to the packed bits.
    #[arg(long)]
    keep_latent: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also write a random input tensor for the first layer.
    #[arg(long)]
    input_out: Option<PathBuf>,
    /// Also write the network config as JSON.
    #[arg(long)]
    config_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QuantizeArgs {
    /// Existing model blob to repack.
    #[arg(long, conflicts_with_all = ["config", "weights"], required_unless_present = "weights")]
    model: Option<PathBuf>,
    /// Network config (JSON) describing the float weights.
    #[arg(long, requires = "weights")]
    config: Option<PathBuf>,
    /// Float weight file.
    #[arg(long, requires = "config")]
    weights: Option<PathBuf>,
    #[arg(long)]
    keep_latent: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Float,
    Binary,
    Fixed,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = EngineArg::Binary)]
    engine: EngineArg,
    /// Output tensor file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    preset: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Simulate only the first N layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Clock in MHz; defaults to the preset's clock or 200 MHz.
    #[arg(long)]
    frequency: Option<f64>,
    #[arg(long, default_value_t = 1)]
    images: usize,
    /// Input tensor; random inputs are drawn from the seed otherwise.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, env = "MXCV_SEED", default_value_t = 0)]
    seed: u64,
    /// Per-cycle signal trace (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Compare every output with the functional fixed-point model.
    #[arg(long)]
    check: bool,
    /// Flip one output bit before checking (exercises the failure path).
    #[arg(long, hide = true)]
    corrupt_output: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Latency/outflow reproduction of the published FPGA table.
    #[arg(long)]
    table2: bool,
    /// Comma-separated row keys; empty selects none.
    #[arg(long)]
    rows: Option<String>,
    /// Run the cycle-level simulator for each row instead of the formula.
    #[arg(long)]
    simulate: bool,
    #[arg(long, value_enum, default_value_t = Format::Markdown)]
    format: Format,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, env = "MXCV_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Train with float weights instead of signs.
    #[arg(long)]
    float: bool,
    /// Random removal sweep, e.g. `0..8` (inclusive) or `0,2,4`.
    #[arg(long)]
    sweep_m: Option<String>,
    /// Seeds per sweep row, counting up from `--seed`.
    #[arg(long, default_value_t = 1)]
    sweep_seeds: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mask(a) => commands::mask::run(a),
        Command::Init(a) => commands::model::init(a),
        Command::Quantize(a) => commands::model::quantize(a),
        Command::Infer(a) => commands::model::infer(a),
        Command::Simulate(a) => commands::simulate::run(a),
        Command::Report(a) => commands::report::run(a),
        Command::TrainToy(a) => commands::train::run(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.code())
        }
    }
}
