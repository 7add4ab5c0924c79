//! `isac-rt` command-line front end.
//!
//! The subcommands mirror the pipeline: `simulate` traces a scene into CIR
//! frames, `process` turns a CIR file into beat signals, PDPs and
//! delay-Doppler maps, `predict` builds the analytic maps from the same CIR,
//! `compare` matches the peaks of two maps and `info` describes any of the
//! files involved.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isac_rt::fmcw::Window;

#[derive(Parser, Debug)]
#[command(name = "isac-rt", version, about = "Dynamic ray-traced RF digital twin for ISAC")]
pub struct Cli {
    /// Output directory
    #[arg(long, global = true, env = "ISAC_RT_OUT", default_value = "isac-rt-out")]
    pub out: PathBuf,

    /// Seed for diffuse sampling and receiver noise, recorded in every output
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Write a fixed creation time into file headers (reproducible outputs)
    #[arg(long, global = true)]
    pub frozen_clock: bool,

    /// Maximum number of worker threads
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Trace a scene into per-chirp CIR frames
    Simulate(SimulateArgs),
    /// Synthesize FMCW beats from a CIR file and export PDPs and delay-Doppler maps
    Process(ProcessArgs),
    /// Build analytic delay-Doppler maps straight from the CIR paths
    Predict(PredictArgs),
    /// Match the peaks of two delay-Doppler maps
    Compare(CompareArgs),
    /// Describe a scene, CIR or map file, or the default chirp configuration
    Info(InfoArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Mono,
    Bi,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Export {
    Csv,
    Bin,
    Pgm,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scene file (JSON)
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, value_enum, default_value = "mono")]
    pub mode: Mode,
    /// Transmitting node id
    #[arg(long)]
    pub tx: String,
    /// Receiving node id (defaults to the transmitter for mono-static links)
    #[arg(long)]
    pub rx: Option<String>,
    /// Number of chirp epochs to simulate
    #[arg(long, default_value_t = 4096)]
    pub chirps: usize,
    /// Start time of the first epoch (s)
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub t0: f64,
    #[command(flatten)]
    pub chirp: ChirpOverrides,
    #[command(flatten)]
    pub trace: TraceOverrides,
}

#[derive(Args, Debug, Default)]
pub struct ChirpOverrides {
    /// Carrier frequency (Hz)
    #[arg(long)]
    pub fc: Option<f64>,
    /// Sweep bandwidth (Hz)
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Ramp duration (s)
    #[arg(long)]
    pub t_chirp: Option<f64>,
    /// Idle time between ramps (s)
    #[arg(long)]
    pub t_idle: Option<f64>,
    /// Chirp slope (Hz/s)
    #[arg(long)]
    pub slope: Option<f64>,
    /// I/Q sampling rate (Hz)
    #[arg(long)]
    pub f_samp: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct TraceOverrides {
    /// Highest specular reflection order
    #[arg(long)]
    pub max_order: Option<u8>,
    /// Diffuse samples per facet or patch
    #[arg(long)]
    pub diffuse_samples: Option<u32>,
    /// Facets larger than this (m^2) are split before diffuse sampling
    #[arg(long)]
    pub max_patch_area: Option<f64>,
    /// Trace LOS and specular paths only
    #[arg(long)]
    pub no_diffuse: bool,
}

#[derive(Args, Debug)]
pub struct WindowArgs {
    /// Chirps per delay-Doppler window
    #[arg(long = "N", default_value_t = 128)]
    pub n: usize,
    /// First chirp of the first window (default: the window centred on the episode)
    #[arg(long)]
    pub start: Option<usize>,
    /// Number of consecutive windows to export
    #[arg(long, default_value_t = 1)]
    pub windows: usize,
    /// Chirps between window starts (default: N)
    #[arg(long)]
    pub hop: Option<usize>,
    /// Zero-padding factor of the range FFT
    #[arg(long, default_value_t = 1)]
    pub zero_pad: usize,
    /// Export formats, comma separated
    #[arg(long, value_enum, value_delimiter = ',', default_value = "bin")]
    pub export: Vec<Export>,
    /// Lower end of the PGM grey scale (dB)
    #[arg(long, default_value_t = -180.0, allow_hyphen_values = true)]
    pub db_min: f64,
    /// Upper end of the PGM grey scale (dB)
    #[arg(long, default_value_t = -80.0, allow_hyphen_values = true)]
    pub db_max: f64,
}

fn parse_window(s: &str) -> Result<Window, isac_rt::Error> {
    s.parse()
}

#[derive(Args, Debug)]
pub struct ProcessArgs {
    /// CIR file written by `simulate`
    #[arg(long)]
    pub cir: PathBuf,
    /// Window for both FFTs
    #[arg(long, value_parser = parse_window, default_value = "hann")]
    pub window: Window,
    /// Fast-time (range) window, overriding --window
    #[arg(long, value_parser = parse_window)]
    pub fast_window: Option<Window>,
    /// Slow-time (Doppler) window, overriding --window
    #[arg(long, value_parser = parse_window)]
    pub slow_window: Option<Window>,
    #[command(flatten)]
    pub windows: WindowArgs,
    /// Add receiver noise from the link budget
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub noise: bool,
    /// Noise power per sample relative to the transmit power (dB), overriding the link budget
    #[arg(long, allow_hyphen_values = true)]
    pub noise_floor_db: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// CIR file written by `simulate`
    #[arg(long)]
    pub cir: PathBuf,
    /// Slow-time window whose Doppler response shapes the prediction
    #[arg(long, value_parser = parse_window, default_value = "hann")]
    pub window: Window,
    #[command(flatten)]
    pub windows: WindowArgs,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// First map (binary export)
    #[arg(long)]
    pub a: PathBuf,
    /// Second map (binary export)
    #[arg(long)]
    pub b: PathBuf,
    /// Peaks are kept down to this many dB below each map's maximum
    #[arg(long, default_value_t = 30.0)]
    pub threshold_db: f64,
    /// Minimum peak separation (bins)
    #[arg(long, default_value_t = 2)]
    pub min_sep: usize,
    /// Matching gate (bins, Chebyshev distance)
    #[arg(long, default_value_t = 3)]
    pub gate: usize,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    #[arg(long, conflicts_with_all = ["cir", "map"])]
    pub scene: Option<PathBuf>,
    #[arg(long, conflicts_with = "map")]
    pub cir: Option<PathBuf>,
    #[arg(long)]
    pub map: Option<PathBuf>,
}

/// Error classes with their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable, invalid or corrupt input (exit 2).
    Input(String),
    /// Inputs that are individually fine but do not fit together (exit 3).
    Contract(String),
    /// Anything else (exit 4).
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Contract(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Contract(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<isac_rt::Error> for CliError {
    fn from(e: isac_rt::Error) -> Self {
        match e {
            isac_rt::Error::AxisMismatch(_) => CliError::Contract(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    }
    let ctx = commands::Context::new(&cli);
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Process(a) => commands::process(&ctx, a),
        Command::Predict(a) => commands::predict(&ctx, a),
        Command::Compare(a) => commands::compare(&ctx, a),
        Command::Info(a) => commands::info(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(4)
        }
    }
}
