//! Shoebox-room simulation: image-source impulse responses, source placement
//! on a sphere around the array and noisy frame rendering.

mod rir;
mod signal;

pub use rir::{eyring_absorption, reflection_coefficient, schroeder_t60, simulate_rir, simulate_rir_at};
pub use signal::{fft_convolve, make_test_signal, spectral_centroid, SignalKind};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::correlation::Frame;
use crate::error::{Error, Result};
use crate::geometry::{MicArray, Point, TdeVector};

/// Analysis frame duration in seconds.
pub const FRAME_DURATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub dimensions: [f64; 3],
    pub t60: f64,
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub sample_rate: f64,
    /// Highest total reflection order kept; `None` keeps every image whose
    /// delay fits in the RIR.
    #[serde(default)]
    pub max_image_order: Option<usize>,
    pub rng_seed: u64,
}

impl Default for RoomSpec {
    fn default() -> Self {
        RoomSpec {
            dimensions: [4.0, 4.0, 4.0],
            t60: 0.0,
            snr_db: f64::INFINITY,
            sample_rate: 16_000.0,
            max_image_order: None,
            rng_seed: 0,
        }
    }
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidRoom("dimensions must be positive".into()));
        }
        if !(self.t60.is_finite() && self.t60 >= 0.0) {
            return Err(Error::InvalidRoom("t60 must be non-negative".into()));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::InvalidRoom("sample rate must be positive".into()));
        }
        if self.snr_db.is_nan() {
            return Err(Error::InvalidRoom("snr must not be NaN".into()));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.len() == 3 && (0..3).all(|i| p[i] > 0.0 && p[i] < self.dimensions[i])
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + x * z + y * z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePlacement {
    pub azimuth: f64,
    pub elevation: f64,
    pub radius: f64,
    /// Cartesian source position in room coordinates.
    pub point: Vec<f64>,
}

impl SourcePlacement {
    /// Places a source at `radius` from `center` in the given direction (degrees).
    pub fn new(center: &Point, azimuth: f64, elevation: f64, radius: f64) -> Self {
        let (az, el) = (azimuth.to_radians(), elevation.to_radians());
        let dir = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
        let point = (0..3).map(|i| center[i] + radius * dir[i]).collect();
        SourcePlacement { azimuth, elevation, radius, point }
    }

    pub fn position(&self) -> Point {
        Point::from_vec(self.point.clone())
    }
}

/// The tetrahedral four-microphone array used throughout the simulations.
pub fn default_array() -> MicArray {
    MicArray::from_coords(
        &[
            vec![2.0, 2.1, 1.83],
            vec![1.8, 2.1, 1.83],
            vec![1.9, 2.2, 1.97],
            vec![1.9, 2.0, 1.97],
        ],
        343.0,
    )
    .expect("default array is non-degenerate")
}

pub const GRID_RADIUS: f64 = 1.7;

/// 21 azimuths in [−160°, 160°] × 9 elevations in [−60°, 60°] at 1.7 m from
/// the default array centroid, azimuth-major.
pub fn direction_grid() -> Vec<SourcePlacement> {
    direction_grid_around(&default_array().centroid(), GRID_RADIUS)
}

pub fn direction_grid_around(center: &Point, radius: f64) -> Vec<SourcePlacement> {
    let mut out = Vec::with_capacity(189);
    for i in 0..21 {
        let az = -160.0 + 16.0 * i as f64;
        for j in 0..9 {
            let el = -60.0 + 15.0 * j as f64;
            out.push(SourcePlacement::new(center, az, el, radius));
        }
    }
    out
}

/// Clean and noisy versions of one rendered frame.
#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub clean: Vec<Vec<f64>>,
    pub noisy: Vec<Vec<f64>>,
}

/// Convolves `signal` with each RIR and keeps the steady-state 100 ms window
/// that starts once the longest RIR is fully engaged, then adds white
/// Gaussian noise at exactly `snr_db` per channel.
pub fn render_channels(
    rirs: &[Vec<f64>],
    signal: &[f64],
    snr_db: f64,
    sample_rate: f64,
    rng_seed: u64,
) -> Result<RenderedFrame> {
    if rirs.is_empty() {
        return Err(Error::InvalidFrame("no impulse responses".into()));
    }
    let rir_len = rirs.iter().map(Vec::len).max().unwrap_or(0);
    let frame_len = (FRAME_DURATION * sample_rate).round() as usize;
    let needed = rir_len + frame_len;
    if signal.len() < needed {
        return Err(Error::SignalTooShort { needed, got: signal.len() });
    }
    // Only the part of the signal that reaches the window matters.
    let source = &signal[..needed];
    let clean: Vec<Vec<f64>> = rirs
        .iter()
        .map(|h| fft_convolve(source, h)[rir_len..rir_len + frame_len].to_vec())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noisy = clean
        .iter()
        .map(|x| {
            if snr_db == f64::INFINITY {
                return x.clone();
            }
            let noise: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let p_signal = mean_power(x);
            let scale = (p_signal / 10f64.powf(snr_db / 10.0) / mean_power(&noise)).sqrt();
            x.iter().zip(&noise).map(|(s, n)| s + scale * n).collect()
        })
        .collect();
    Ok(RenderedFrame { clean, noisy })
}

pub fn render_frame(
    rirs: &[Vec<f64>],
    signal: &[f64],
    snr_db: f64,
    sample_rate: f64,
    rng_seed: u64,
) -> Result<Frame> {
    let r = render_channels(rirs, signal, snr_db, sample_rate, rng_seed)?;
    Frame::new(r.noisy, sample_rate)
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// One simulated observation with its ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedFrame {
    pub frame: Frame,
    pub placement: SourcePlacement,
    pub delays: TdeVector,
}

/// Frame seed for a (condition, placement, repetition) triple, mixed so that
/// nearby indices do not share streams.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates the full chain for one placement: RIRs, a source signal long
/// enough for the window, convolution and noise. The signal and the noise use
/// streams derived from `room.rng_seed`.
pub fn simulate_frame(
    room: &RoomSpec,
    array: &MicArray,
    placement: &SourcePlacement,
    kind: SignalKind,
) -> Result<SimulatedFrame> {
    let rirs = simulate_rir(room, array, placement)?;
    let rir_len = rirs.iter().map(Vec::len).max().unwrap_or(0);
    let frame_len = (FRAME_DURATION * room.sample_rate).round() as usize;
    let duration = (rir_len + frame_len) as f64 / room.sample_rate;
    let signal = make_test_signal(kind, duration, room.sample_rate, derive_seed(room.rng_seed, 1, 0));
    let frame = render_frame(
        &rirs,
        &signal,
        room.snr_db,
        room.sample_rate,
        derive_seed(room.rng_seed, 2, 0),
    )?;
    Ok(SimulatedFrame {
        frame,
        placement: placement.clone(),
        delays: array.tde_from_source(&placement.position()),
    })
}
