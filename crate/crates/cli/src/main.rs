mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use llc_dmm::solvers::EngineKind;
use llc_dmm::Preset;

#[derive(Debug, Parser)]
#[command(name = "llc-dmm", version, about = "Direct-mapped LLC resonant converter simulator")]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the precomputed matrix bundle and write it as JSON.
    Precompute(PrecomputeArgs),
    /// Simulate one engine and write its waveforms as CSV.
    Run(RunArgs),
    /// Check rectifier feasibility and cross-engine equivalence.
    Verify(VerifyArgs),
    /// Emit tank gain curves as CSV.
    Gain(GainArgs),
    /// Run the fault and sweep test sequence and report 2-norm errors.
    Sequence(SequenceArgs),
}

/// Where the circuit and scenario come from.
#[derive(Debug, Args)]
pub struct Source {
    /// Built-in parameter set.
    #[arg(long, default_value = "set2", value_parser = parse_preset, conflicts_with = "config")]
    pub preset: Preset,
    /// TOML scenario file (schema version 1).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Time-step override (s).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Switching frequency for preset runs (Hz); defaults to √(fr1·fr2).
    #[arg(long, conflicts_with = "config")]
    pub fs: Option<f64>,
    /// Duration for preset runs (s).
    #[arg(long, default_value_t = 2e-3, conflicts_with = "config")]
    pub duration: f64,
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    #[command(flatten)]
    pub source: Source,
    /// Load resistance override (Ω), e.g. to build a fault bundle.
    #[arg(long)]
    pub load: Option<f64>,
    /// Also populate the quantized mirror with the default formats.
    #[arg(long)]
    pub fixed_point: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,
    /// iter-be, fe, dmm2, dmm1 or dmm1-fxp.
    #[arg(long, short, value_parser = parse_engine)]
    pub engine: EngineKind,
    /// Precomputed bundles, one per network variant in order.
    #[arg(long)]
    pub bundle: Vec<PathBuf>,
    /// Keep every n-th step.
    #[arg(long)]
    pub decimation: Option<usize>,
    /// Output CSV; `-` writes to stdout.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub source: Source,
    /// Steps of the cross-engine comparison.
    #[arg(long, default_value_t = 100_000)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct GainArgs {
    /// Parameter set supplying the inductance ratio.
    #[arg(long, default_value = "set1", value_parser = parse_preset)]
    pub preset: Preset,
    /// Explicit inductance ratio Lm/Lr + 1; overrides the preset.
    #[arg(long)]
    pub m: Option<f64>,
    /// Quality factors.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0])]
    pub q: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub f_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub f_max: f64,
    #[arg(long, default_value_t = 381)]
    pub points: usize,
    /// Output CSV; `-` writes to stdout.
    #[arg(long, short, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SequenceArgs {
    /// Scenario file; the built-in test sequence when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Truncate the scenario (s).
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long, default_value = "iter-be", value_parser = parse_engine)]
    pub reference: EngineKind,
    #[arg(long, default_value = "dmm1-fxp", value_parser = parse_engine)]
    pub dut: EngineKind,
    /// Largest accepted 2-norm relative error per signal and window.
    #[arg(long, default_value_t = 5e-3)]
    pub threshold: f64,
    /// Write `reference.csv` and `dut.csv` here.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
    /// Keep every n-th step in the CSV files.
    #[arg(long, default_value_t = 100)]
    pub decimation: usize,
    /// Write the scenario that was run as a TOML file.
    #[arg(long)]
    pub save_config: Option<PathBuf>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: llc_dmm::Error| e.to_string())
}

fn parse_engine(s: &str) -> Result<EngineKind, String> {
    s.parse().map_err(|e: llc_dmm::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match &cli.command {
        Command::Precompute(a) => commands::precompute(a),
        Command::Run(a) => commands::run(a),
        Command::Verify(a) => commands::verify(a),
        Command::Gain(a) => commands::gain(a),
        Command::Sequence(a) => commands::sequence(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
