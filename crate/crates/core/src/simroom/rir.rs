use crate::error::{Error, Result};
use crate::geometry::{MicArray, Point};

use super::{RoomSpec, SourcePlacement};

const HALF_TAPS: i64 = 4;

/// Uniform energy absorption coefficient giving reverberation time `t60` in
/// the room under Eyring's formula.
pub fn eyring_absorption(room: &RoomSpec) -> f64 {
    if room.t60 <= 0.0 {
        return 1.0;
    }
    1.0 - (-0.161 * room.volume() / (room.surface() * room.t60)).exp()
}

/// Per-axis image coordinates `2nL ± s` with reflection counts, restricted to
/// `|coord − receiver| ≤ max_dist` and at most `order` reflections.
fn axis_images(l: f64, s: f64, receiver: f64, max_dist: f64, order: i64) -> Vec<(f64, i64)> {
    let n_max = (max_dist / (2.0 * l)).ceil() as i64 + 1;
    let mut v = Vec::new();
    for n in -n_max..=n_max {
        for q in 0..2i64 {
            let coord = (1 - 2 * q) as f64 * s + 2.0 * n as f64 * l;
            let k = (2 * n - q).abs();
            if k <= order && (coord - receiver).abs() <= max_dist {
                v.push((coord - receiver, k));
            }
        }
    }
    v
}

/// Calls `f(distance, order)` for every image of `src` seen from `receiver`
/// within `max_dist`.
fn for_each_image(
    dims: [f64; 3],
    src: [f64; 3],
    receiver: [f64; 3],
    max_dist: f64,
    order: i64,
    mut f: impl FnMut(f64, i64),
) {
    let xs = axis_images(dims[0], src[0], receiver[0], max_dist, order);
    let ys = axis_images(dims[1], src[1], receiver[1], max_dist, order);
    let zs = axis_images(dims[2], src[2], receiver[2], max_dist, order);
    let r2 = max_dist * max_dist;
    for &(dx, kx) in &xs {
        for &(dy, ky) in &ys {
            let kxy = kx + ky;
            let dxy = dx * dx + dy * dy;
            if kxy > order || dxy > r2 {
                continue;
            }
            for &(dz, kz) in &zs {
                let d2 = dxy + dz * dz;
                if kxy + kz <= order && d2 <= r2 {
                    f(d2.sqrt(), kxy + kz);
                }
            }
        }
    }
}

fn order_limit(room: &RoomSpec) -> i64 {
    if room.t60 <= 0.0 {
        0
    } else {
        room.max_image_order.map_or(i64::MAX, |o| o as i64)
    }
}

/// Pressure reflection coefficient `sqrt(1 − α)` of every wall.
pub fn reflection_coefficient(room: &RoomSpec) -> f64 {
    if room.t60 <= 0.0 {
        return 0.0;
    }
    (1.0 - eyring_absorption(room)).max(0.0).sqrt()
}

fn windowed_sinc(x: f64) -> f64 {
    let w = 0.5 * (1.0 + (std::f64::consts::PI * x / HALF_TAPS as f64).cos());
    let s = if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    };
    w * s
}

/// Adds an impulse of amplitude `gain` at fractional sample `delay` using an
/// 8-tap Hann-windowed sinc.
fn add_impulse(h: &mut [f64], delay: f64, gain: f64) {
    let base = delay.floor() as i64;
    for n in base - HALF_TAPS + 1..=base + HALF_TAPS {
        if n < 0 || n as usize >= h.len() {
            continue;
        }
        let x = n as f64 - delay;
        if x.abs() < HALF_TAPS as f64 {
            h[n as usize] += gain * windowed_sinc(x);
        }
    }
}

/// Allen–Berkley 100 Hz high-pass. Image-source taps are all positive, so
/// the dense late tail otherwise accumulates a large DC component.
fn highpass_in_place(h: &mut [f64], fs: f64) {
    let w = std::f64::consts::TAU * 100.0 / fs;
    let r1 = (-w).exp();
    let (b1, b2, a1) = (2.0 * r1 * w.cos(), -r1 * r1, -(1.0 + r1));
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in h.iter_mut() {
        let y0 = b1 * y1 + b2 * y2 + *v;
        *v = y0 + a1 * y1 + r1 * y2;
        y2 = y1;
        y1 = y0;
    }
}

/// Impulse responses from `src` to every microphone.
pub fn simulate_rir(room: &RoomSpec, array: &MicArray, src: &SourcePlacement) -> Result<Vec<Vec<f64>>> {
    simulate_rir_at(room, array, &src.position())
}

pub fn simulate_rir_at(room: &RoomSpec, array: &MicArray, src: &Point) -> Result<Vec<Vec<f64>>> {
    room.validate()?;
    if array.dim() != 3 {
        return Err(Error::InvalidRoom("room simulation needs a 3-D array".into()));
    }
    if !room.contains(src) {
        return Err(Error::SourceOutsideRoom);
    }
    if array.positions().iter().any(|m| !room.contains(m)) {
        return Err(Error::InvalidRoom("microphone outside the room".into()));
    }
    let fs = room.sample_rate;
    let nu = array.speed_of_sound();
    let max_direct = array
        .positions()
        .iter()
        .map(|m| (src - m).norm())
        .fold(0.0, f64::max);
    let direct_samples = max_direct / nu * fs;
    let len = if room.t60 > 0.0 {
        (room.t60 * fs).max(direct_samples).ceil() as usize + HALF_TAPS as usize + 1
    } else {
        direct_samples.ceil() as usize + HALF_TAPS as usize + 1
    };

    let beta = reflection_coefficient(room);
    let order = order_limit(room);
    let max_dist = len as f64 / fs * nu;
    let s = [src[0], src[1], src[2]];

    let mut rirs = Vec::with_capacity(array.num_mics());
    for m in array.positions() {
        let mut h = vec![0.0; len];
        for_each_image(room.dimensions, s, [m[0], m[1], m[2]], max_dist, order, |d, k| {
            add_impulse(&mut h, d / nu * fs, beta.powi(k as i32) / d.max(1e-3));
        });
        if room.t60 > 0.0 {
            highpass_in_place(&mut h, fs);
        }
        rirs.push(h);
    }
    Ok(rirs)
}

/// Reverberation time from Schroeder backward integration, extrapolated from
/// the −5 dB to −25 dB span of the energy decay curve. `None` when the decay
/// never reaches −25 dB.
pub fn schroeder_t60(h: &[f64], sample_rate: f64) -> Option<f64> {
    let h2: Vec<f64> = h.iter().map(|v| v * v).collect();
    schroeder_fit(&h2, sample_rate)
}

fn schroeder_fit(h2: &[f64], sample_rate: f64) -> Option<f64> {
    let mut edc = vec![0.0; h2.len() + 1];
    for n in (0..h2.len()).rev() {
        edc[n] = edc[n + 1] + h2[n];
    }
    let total = edc[0];
    if total <= 0.0 {
        return None;
    }
    let (mut sx, mut sy, mut sxx, mut sxy, mut count) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut reached = false;
    for (n, e) in edc.iter().enumerate().take(h2.len()) {
        let db = 10.0 * (e / total).log10();
        if db < -25.0 {
            reached = true;
            break;
        }
        if db <= -5.0 {
            let t = n as f64 / sample_rate;
            sx += t;
            sy += db;
            sxx += t * t;
            sxy += t * db;
            count += 1.0;
        }
    }
    if !reached || count < 2.0 {
        return None;
    }
    let slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    (slope < 0.0).then(|| -60.0 / slope)
}
