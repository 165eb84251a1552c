//! Benchmark protocol: simulated frames over a direction grid, every method
//! on shared frames, inlier statistics, error histograms and timings.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MicArray, Point};
use crate::pipeline::{run_localize, LocalizeParams};
use crate::result::Method;
use crate::simroom::{
    default_array, derive_seed, direction_grid, simulate_frame, RoomSpec, SignalKind,
    SourcePlacement,
};

pub const HISTOGRAM_BINS: usize = 18;
/// Error assigned to trials that produce no position.
pub const FAILURE_ERROR: f64 = 180.0;

/// Angle in degrees between `true_pos − c` and `est_pos − c`, where `c` is the
/// array centroid.
pub fn angular_error(true_pos: &Point, est_pos: &Point, array: &MicArray) -> Result<f64> {
    let c = array.centroid();
    let (a, b) = (true_pos - &c, est_pos - &c);
    let (na, nb) = (a.norm(), b.norm());
    if !(na > 0.0 && nb > 0.0) || !na.is_finite() || !nb.is_finite() {
        return Err(Error::InvalidConfig("zero-length direction".into()));
    }
    let cos = (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub snr_db: f64,
    pub t60: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub conditions: Vec<Condition>,
    /// Indices into the 189-point direction grid.
    pub directions: Vec<usize>,
    pub frames_per_direction: usize,
    pub inlier_threshold_deg: f64,
    pub seed: u64,
    pub signal: SignalKind,
    pub room_dimensions: [f64; 3],
    pub sample_rate: f64,
    pub max_image_order: Option<usize>,
    pub params: LocalizeParams,
    pub csv_path: Option<PathBuf>,
    pub timing_csv_path: Option<PathBuf>,
    pub json_path: Option<PathBuf>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let room = RoomSpec::default();
        Self {
            methods: Method::ALL.to_vec(),
            conditions: vec![Condition { snr_db: 0.0, t60: 0.0 }],
            directions: spread_directions(40),
            frames_per_direction: 2,
            inlier_threshold_deg: 30.0,
            seed: 0,
            signal: SignalKind::SpeechLike,
            room_dimensions: room.dimensions,
            sample_rate: room.sample_rate,
            max_image_order: room.max_image_order,
            params: LocalizeParams::default(),
            csv_path: None,
            timing_csv_path: None,
            json_path: None,
        }
    }
}

/// `count` grid indices spread evenly over the 189 directions.
pub fn spread_directions(count: usize) -> Vec<usize> {
    let total = direction_grid().len();
    let count = count.min(total);
    (0..count).map(|i| i * total / count.max(1)).collect()
}

/// The full SNR × T60 matrix of the simulated protocol.
pub fn paper_conditions() -> Vec<Condition> {
    let mut v = Vec::new();
    for snr_db in [0.0, -5.0, -10.0] {
        for t60 in [0.0, 0.1, 0.2, 0.4, 0.6] {
            v.push(Condition { snr_db, t60 });
        }
    }
    v
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.conditions.is_empty() {
            return Err(Error::InvalidConfig("methods and conditions must be non-empty".into()));
        }
        if !(self.inlier_threshold_deg > 0.0) {
            return Err(Error::InvalidConfig("inlier threshold must be positive".into()));
        }
        if self.directions.is_empty() || self.frames_per_direction == 0 {
            return Err(Error::InvalidConfig("no trials requested".into()));
        }
        let n = direction_grid().len();
        if let Some(d) = self.directions.iter().find(|&&d| d >= n) {
            return Err(Error::InvalidConfig(format!("direction index {d} ≥ {n}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub method: Method,
    pub snr_db: f64,
    pub t60: f64,
    pub direction: usize,
    pub frame: usize,
    pub azimuth: f64,
    pub elevation: f64,
    /// `None` when the method produced no position.
    pub error_deg: Option<f64>,
    pub feasible: bool,
    /// `J` at the returned delays.
    pub criterion: Option<f64>,
    pub failure: Option<String>,
    pub wall_time: f64,
}

impl TrialRecord {
    pub fn accounted_error(&self) -> f64 {
        self.error_deg.unwrap_or(FAILURE_ERROR)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: Method,
    pub snr_db: f64,
    pub t60: f64,
    pub trials: usize,
    pub inliers: usize,
    /// Percent.
    pub inlier_rate: f64,
    pub inlier_mean_error: f64,
    pub inlier_std_error: f64,
    /// 10° bins over [0°, 180°]; failures land in the last bin.
    pub histogram: [usize; HISTOGRAM_BINS],
    pub mean_runtime: f64,
    pub std_runtime: f64,
}

/// Compensated (Neumaier) sum.
fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Population mean and standard deviation; `(NaN, NaN)` when empty.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = neumaier_sum(values.iter().copied()) / n;
    let var = neumaier_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
    (mean, var.sqrt())
}

fn histogram_bin(error: f64) -> usize {
    ((error / 10.0).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

/// Aggregates the trials of one (method, condition) cell. A trial is an
/// inlier when it produced a position within `threshold` degrees.
pub fn summarize(
    method: Method,
    condition: Condition,
    trials: &[TrialRecord],
    threshold: f64,
) -> MetricsRow {
    let inlier_errors: Vec<f64> = trials
        .iter()
        .filter_map(|t| t.error_deg)
        .filter(|&e| e <= threshold)
        .collect();
    let mut histogram = [0; HISTOGRAM_BINS];
    for t in trials {
        histogram[histogram_bin(t.accounted_error())] += 1;
    }
    let (mean, std) = mean_std(&inlier_errors);
    let runtimes: Vec<f64> = trials.iter().map(|t| t.wall_time).collect();
    let (mean_runtime, std_runtime) = mean_std(&runtimes);
    MetricsRow {
        method,
        snr_db: condition.snr_db,
        t60: condition.t60,
        trials: trials.len(),
        inliers: inlier_errors.len(),
        inlier_rate: if trials.is_empty() {
            0.0
        } else {
            100.0 * inlier_errors.len() as f64 / trials.len() as f64
        },
        inlier_mean_error: mean,
        inlier_std_error: std,
        histogram,
        mean_runtime,
        std_runtime,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub rows: Vec<MetricsRow>,
    pub trials: Vec<TrialRecord>,
}

impl BenchmarkReport {
    pub fn row(&self, method: Method, snr_db: f64, t60: f64) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.snr_db == snr_db && r.t60 == t60)
    }

    /// Metrics table without runtime columns, so identical configurations
    /// produce identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,snr_db,t60,trials,inliers,inlier_rate,inlier_mean_error,inlier_std_error",
        );
        for b in 0..HISTOGRAM_BINS {
            out.push_str(&format!(",h{:03}", b * 10));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.4},{:.4},{:.4}",
                r.method, r.snr_db, r.t60, r.trials, r.inliers, r.inlier_rate,
                r.inlier_mean_error, r.inlier_std_error
            ));
            for h in r.histogram {
                out.push_str(&format!(",{h}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_timing_csv(&self) -> String {
        let mut out = String::from("method,snr_db,t60,mean_runtime,std_runtime\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6e},{:.6e}\n",
                r.method, r.snr_db, r.t60, r.mean_runtime, r.std_runtime
            ));
        }
        out
    }

    fn write_outputs(&self) -> Result<()> {
        let write = |path: &Option<PathBuf>, text: String| -> Result<()> {
            if let Some(p) = path {
                let mut f = std::fs::File::create(p)?;
                f.write_all(text.as_bytes())?;
                f.flush()?;
            }
            Ok(())
        };
        write(&self.config.csv_path, self.to_csv())?;
        write(&self.config.timing_csv_path, self.to_timing_csv())?;
        if self.config.json_path.is_some() {
            write(&self.config.json_path, serde_json::to_string_pretty(self)?)?;
        }
        Ok(())
    }
}

struct TrialOutcome {
    error: Option<f64>,
    feasible: bool,
    criterion: Option<f64>,
    failure: Option<String>,
    wall_time: f64,
}

/// One trial of `method` on a simulated frame.
fn run_trial(
    frame: &crate::correlation::Frame,
    placement: &SourcePlacement,
    array: &MicArray,
    method: Method,
    params: &LocalizeParams,
) -> TrialOutcome {
    match run_localize(frame, array, method, params) {
        Ok(r) => {
            let error = r
                .point()
                .and_then(|p| angular_error(&placement.position(), &p, array).ok());
            TrialOutcome {
                failure: error.is_none().then(|| "no position".to_string()),
                error,
                feasible: r.feasible,
                criterion: r.criterion,
                wall_time: r.wall_time,
            }
        }
        Err(e) => TrialOutcome {
            error: None,
            feasible: false,
            criterion: None,
            failure: Some(e.to_string()),
            wall_time: 0.0,
        },
    }
}

/// Runs the protocol. Every method sees the same frames; the frame for
/// (direction, repetition) uses a seed derived from `cfg.seed` only, so the
/// source signal is shared across conditions too. Outputs are rewritten
/// after each condition.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    run_benchmark_with_progress(cfg, |_| {})
}

pub fn run_benchmark_with_progress(
    cfg: &BenchmarkConfig,
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let array = default_array();
    let grid = direction_grid();
    let mut report = BenchmarkReport { config: cfg.clone(), rows: Vec::new(), trials: Vec::new() };
    for &cond in &cfg.conditions {
        let mut cell: Vec<Vec<TrialRecord>> = vec![Vec::new(); cfg.methods.len()];
        for &d in &cfg.directions {
            let placement = &grid[d];
            for f in 0..cfg.frames_per_direction {
                let room = RoomSpec {
                    dimensions: cfg.room_dimensions,
                    t60: cond.t60,
                    snr_db: cond.snr_db,
                    sample_rate: cfg.sample_rate,
                    max_image_order: cfg.max_image_order,
                    rng_seed: derive_seed(cfg.seed, d as u64, f as u64),
                };
                let sim = simulate_frame(&room, &array, placement, cfg.signal)?;
                for (k, &method) in cfg.methods.iter().enumerate() {
                    let o = run_trial(&sim.frame, placement, &array, method, &cfg.params);
                    cell[k].push(TrialRecord {
                        method,
                        snr_db: cond.snr_db,
                        t60: cond.t60,
                        direction: d,
                        frame: f,
                        azimuth: placement.azimuth,
                        elevation: placement.elevation,
                        error_deg: o.error,
                        feasible: o.feasible,
                        criterion: o.criterion,
                        failure: o.failure,
                        wall_time: o.wall_time,
                    });
                }
            }
        }
        for (k, &method) in cfg.methods.iter().enumerate() {
            let row = summarize(method, cond, &cell[k], cfg.inlier_threshold_deg);
            on_row(&row);
            report.rows.push(row);
        }
        report.trials.extend(cell.into_iter().flatten());
        report.write_outputs()?;
    }
    Ok(report)
}
