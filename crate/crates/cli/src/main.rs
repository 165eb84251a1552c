use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geotde::bench::{run_benchmark_with_progress, spread_directions, BenchmarkConfig, Condition};
use geotde::pipeline::{run_localize, LocalizeParams};
use geotde::simroom::{
    default_array, direction_grid, simulate_frame, RoomSpec, SignalKind, SourcePlacement,
};
use geotde::wav::{read_frame, write_wav};
use geotde::{Error, MicArray, Method};
use serde_json::json;

#[derive(Parser)]
#[command(name = "geotde", version, about = "Multichannel TDE sound source localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one frame in a reverberant room and write it as WAV with a
    /// JSON sidecar holding the ground truth.
    Simulate(SimulateArgs),
    /// Localize a source from a multichannel WAV file (or one mono file per
    /// microphone).
    Localize(LocalizeArgs),
    /// Run the benchmark protocol and write CSV/JSON reports.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Array description (JSON); the default tetrahedron when omitted.
    #[arg(long)]
    array: Option<PathBuf>,
    /// Index into the 189-direction grid.
    #[arg(long, conflicts_with_all = ["azimuth", "elevation"])]
    direction: Option<usize>,
    /// Degrees.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    azimuth: f64,
    /// Degrees.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    elevation: f64,
    /// Meters from the array centroid.
    #[arg(long, default_value_t = 1.7)]
    radius: f64,
    #[arg(long, default_value_t = 0.0)]
    t60: f64,
    /// Decibels; omit for a noiseless frame.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "speech_like")]
    signal: SignalKind,
    #[arg(long, default_value_t = 16_000)]
    sample_rate: u32,
    /// Room size in meters.
    #[arg(long, num_args = 3, default_values_t = [4.0, 4.0, 4.0])]
    room: Vec<f64>,
    /// Output WAV path; the sidecar is written next to it with a .json extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LocalizeArgs {
    /// One multichannel WAV, or one mono WAV per microphone in order.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    array: Option<PathBuf>,
    #[arg(long, default_value = "bnb")]
    method: Method,
    /// Solver parameters (JSON); defaults when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark configuration (JSON); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Restrict to these methods (repeatable).
    #[arg(long)]
    method: Vec<Method>,
    /// Replace the conditions by the single (snr, t60) pair built from these.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    #[arg(long)]
    t60: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of grid directions, spread evenly.
    #[arg(long)]
    directions: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Output directory for metrics.csv, timing.csv and report.json.
    #[arg(long)]
    out: PathBuf,
}

/// Process outcome: configuration problems exit with 2, solver failures with 3.
enum Failure {
    Config(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_)
            | Error::Json(_)
            | Error::Wav(_)
            | Error::InvalidArray(_)
            | Error::InvalidConfig(_)
            | Error::InvalidRoom(_)
            | Error::InvalidFrame(_)
            | Error::SampleRateMismatch(..)
            | Error::SourceOutsideRoom
            | Error::DimensionMismatch { .. }
            | Error::FrameTooShort { .. }
            | Error::SilentChannel(_) => Failure::Config(e.to_string()),
            other => Failure::Solver(other.to_string()),
        }
    }
}

fn load_array(path: &Option<PathBuf>) -> Result<MicArray, Failure> {
    match path {
        Some(p) => Ok(MicArray::load(p)?),
        None => Ok(default_array()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let array = load_array(&args.array)?;
    let placement = match args.direction {
        Some(d) => {
            let grid = direction_grid();
            let p = grid.get(d).ok_or_else(|| {
                Failure::Config(format!("direction index {d} outside 0..{}", grid.len()))
            })?;
            SourcePlacement::new(&array.centroid(), p.azimuth, p.elevation, args.radius)
        }
        None => SourcePlacement::new(&array.centroid(), args.azimuth, args.elevation, args.radius),
    };
    let room = RoomSpec {
        dimensions: [args.room[0], args.room[1], args.room[2]],
        t60: args.t60,
        snr_db: args.snr.unwrap_or(f64::INFINITY),
        sample_rate: args.sample_rate as f64,
        max_image_order: None,
        rng_seed: args.seed,
    };
    let sim = simulate_frame(&room, &array, &placement, args.signal)?;
    write_wav(&args.out, sim.frame.channels(), args.sample_rate)?;
    let sidecar = json!({
        "position": placement.point,
        "azimuth": placement.azimuth,
        "elevation": placement.elevation,
        "radius": placement.radius,
        "delays": sim.delays.as_slice(),
        "t60": args.t60,
        "snr_db": args.snr,
        "seed": args.seed,
        "signal": args.signal,
        "sample_rate": args.sample_rate,
        "array": serde_json::from_str::<serde_json::Value>(&array.to_json_string()).map_err(Error::from)?,
    });
    let text = serde_json::to_string_pretty(&sidecar).map_err(Error::from)?;
    write_text(&args.out.with_extension("json"), &text)
}

fn localize(args: LocalizeArgs) -> Result<(), Failure> {
    let array = load_array(&args.array)?;
    let params: LocalizeParams = match &args.params {
        Some(p) => read_json(p)?,
        None => LocalizeParams::default(),
    };
    let frame = read_frame(&args.inputs)?;
    if frame.num_channels() != array.num_mics() {
        return Err(Failure::Config(format!(
            "{} channels for {} microphones",
            frame.num_channels(),
            array.num_mics()
        )));
    }
    let result = run_localize(&frame, &array, args.method, &params)?;
    let text = serde_json::to_string_pretty(&result).map_err(Error::from)?;
    match &args.out {
        Some(p) => write_text(p, &text)?,
        None => println!("{text}"),
    }
    if result.position.is_none() {
        return Err(Failure::Solver("the estimated delays are not feasible".into()));
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let mut cfg: BenchmarkConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => BenchmarkConfig::default(),
    };
    if !args.method.is_empty() {
        cfg.methods = args.method.clone();
    }
    if args.snr.is_some() || args.t60.is_some() {
        cfg.conditions = vec![Condition {
            snr_db: args.snr.unwrap_or(0.0),
            t60: args.t60.unwrap_or(0.0),
        }];
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.directions {
        cfg.directions = spread_directions(n);
    }
    if let Some(f) = args.frames {
        cfg.frames_per_direction = f;
    }
    std::fs::create_dir_all(&args.out).map_err(Error::from)?;
    cfg.csv_path = Some(args.out.join("metrics.csv"));
    cfg.timing_csv_path = Some(args.out.join("timing.csv"));
    cfg.json_path = Some(args.out.join("report.json"));
    run_benchmark_with_progress(&cfg, |r| {
        eprintln!(
            "{:>6} snr {:>5} t60 {:>4}: inliers {:5.1}%  mean {:6.2}°  std {:6.2}°  runtime {:.3} s",
            r.method.name(),
            r.snr_db,
            r.t60,
            r.inlier_rate,
            r.inlier_mean_error,
            r.inlier_std_error,
            r.mean_runtime
        );
    })
    .map_err(|e| match e {
        // Simulation errors inside the benchmark are configuration problems.
        Error::NoFeasibleRegion | Error::AllStartsFailed => Failure::Solver(e.to_string()),
        other => Failure::Config(other.to_string()),
    })?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Localize(a) => localize(a),
        Command::Bench(a) => bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("localization failed: {msg}");
            ExitCode::from(3)
        }
    }
}
