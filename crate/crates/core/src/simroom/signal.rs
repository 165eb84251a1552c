//! Synthetic source signals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// Source-filter model: jittered glottal pulses plus aspiration noise,
    /// three cascaded formant resonators and a 4 Hz syllabic envelope.
    SpeechLike,
    White,
    /// Linear sweep from 100 Hz to 0.4·fs.
    Chirp,
}

impl std::str::FromStr for SignalKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "speech_like" | "speech" => Ok(SignalKind::SpeechLike),
            "white" => Ok(SignalKind::White),
            "chirp" => Ok(SignalKind::Chirp),
            other => Err(crate::error::Error::InvalidConfig(format!(
                "unknown signal kind `{other}`"
            ))),
        }
    }
}

/// Two-pole resonator `y[n] = x[n] + 2r cos θ y[n−1] − r² y[n−2]`.
fn resonate(x: &[f64], freq: f64, bandwidth: f64, fs: f64) -> Vec<f64> {
    let r = (-std::f64::consts::PI * bandwidth / fs).exp();
    let theta = std::f64::consts::TAU * freq / fs;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    // Unit gain at DC.
    let gain = 1.0 - a1 - a2;
    let mut y = vec![0.0; x.len()];
    for n in 0..x.len() {
        let y1 = if n >= 1 { y[n - 1] } else { 0.0 };
        let y2 = if n >= 2 { y[n - 2] } else { 0.0 };
        y[n] = gain * x[n] + a1 * y1 + a2 * y2;
    }
    y
}

fn normalize(mut x: Vec<f64>) -> Vec<f64> {
    if x.is_empty() {
        return x;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
    x
}

/// One-pole low-pass `y[n] = (1 − a) x[n] + a y[n−1]`.
fn one_pole(x: &mut [f64], a: f64) {
    let mut y = 0.0;
    for v in x.iter_mut() {
        y = (1.0 - a) * *v + a * y;
        *v = y;
    }
}

fn speech_like(len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f0 = rng.random_range(100.0..180.0);
    let syllable_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut voiced = vec![0.0; len];
    let mut next = rng.random_range(0.0..fs / f0);
    let jitter = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    while (next as usize) < len {
        voiced[next as usize] += 1.0;
        next += fs / f0 * (1.0 + 0.02 * jitter(rng));
    }
    // Glottal roll-off of −12 dB/octave above 100 Hz.
    let tilt = (-std::f64::consts::TAU * 100.0 / fs).exp();
    one_pole(&mut voiced, tilt);
    one_pole(&mut voiced, tilt);
    let vr = (voiced.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt().max(1e-300);
    // Aspiration noise, then lip radiation (+6 dB/octave).
    let mut excitation: Vec<f64> = voiced.iter().map(|v| v / vr + 0.3 * jitter(rng)).collect();
    for n in (1..len).rev() {
        excitation[n] -= 0.95 * excitation[n - 1];
    }
    let formants = [
        (rng.random_range(450.0..650.0), 90.0),
        (rng.random_range(1200.0..1700.0), 130.0),
        (rng.random_range(2300.0..2800.0), 180.0),
    ];
    let mut y = excitation;
    for (f, bw) in formants {
        y = resonate(&y, f, bw, fs);
    }
    let depth = 0.45;
    for (n, v) in y.iter_mut().enumerate() {
        let t = n as f64 / fs;
        let envelope = 1.0 - depth + depth * (std::f64::consts::TAU * 4.0 * t + syllable_phase).sin();
        *v *= envelope;
    }
    y
}

/// Deterministic test signal of `duration` seconds, zero mean, unit RMS.
pub fn make_test_signal(kind: SignalKind, duration: f64, sample_rate: f64, seed: u64) -> Vec<f64> {
    let len = (duration * sample_rate).round().max(0.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = match kind {
        SignalKind::White => (0..len).map(|_| StandardNormal.sample(&mut rng)).collect(),
        SignalKind::Chirp => {
            let (f_start, f_end) = (100.0, 0.4 * sample_rate);
            let phase0 = rng.random_range(0.0..std::f64::consts::TAU);
            let rate = (f_end - f_start) / duration.max(f64::MIN_POSITIVE);
            (0..len)
                .map(|n| {
                    let t = n as f64 / sample_rate;
                    (std::f64::consts::TAU * (f_start * t + 0.5 * rate * t * t) + phase0).sin()
                })
                .collect()
        }
        SignalKind::SpeechLike => speech_like(len, sample_rate, &mut rng),
    };
    normalize(raw)
}

/// Power-weighted mean frequency of `x`, in Hz.
pub fn spectral_centroid(x: &[f64], sample_rate: f64) -> f64 {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1) {
        let p = c.norm_sqr();
        num += p * k as f64 * sample_rate / n as f64;
        den += p;
    }
    num / den
}

/// Linear convolution via FFT.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |x: &[f64]| {
        let mut v: Vec<Complex<f64>> = x.iter().map(|&r| Complex::new(r, 0.0)).collect();
        v.resize(n, Complex::new(0.0, 0.0));
        v
    };
    let (mut fa, mut fb) = (pad(a), pad(b));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa.iter().take(out_len).map(|c| c.re / n as f64).collect()
}
