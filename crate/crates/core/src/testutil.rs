use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::correlation::{build_correlations, default_max_lag, CorrelationSet, Frame};
use crate::geometry::{MicArray, Point, TdeVector};

pub const FS: f64 = 16_000.0;

pub fn paper_array() -> MicArray {
    MicArray::from_coords(
        &[
            vec![2.0, 2.1, 1.83],
            vec![1.8, 2.1, 1.83],
            vec![1.9, 2.2, 1.97],
            vec![1.9, 2.0, 1.97],
        ],
        343.0,
    )
    .unwrap()
}

/// Sum of random sinusoids in 150..3000 Hz, evaluable at any time.
pub struct Tones(Vec<(f64, f64, f64)>);

impl Tones {
    pub fn new(seed: u64, count: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tones(
            (0..count)
                .map(|_| {
                    (
                        rng.random_range(0.2..1.0),
                        rng.random_range(150.0..3000.0),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect(),
        )
    }

    pub fn at(&self, t: f64) -> f64 {
        self.0
            .iter()
            .map(|(a, f, p)| a * (std::f64::consts::TAU * f * t + p).sin())
            .sum()
    }

    /// Channel `m` receives the signal delayed by `delays[m]` seconds.
    pub fn frame(&self, delays: &[f64], len: usize, fs: f64) -> Frame {
        let channels = delays
            .iter()
            .map(|d| (0..len).map(|i| self.at(i as f64 / fs - d)).collect())
            .collect();
        Frame::new(channels, fs).unwrap()
    }
}

/// Noiseless free-field frame of a tone mixture emitted at `source`.
pub fn shifted_copies(array: &MicArray, source: &Point, seed: u64, len: usize) -> (CorrelationSet, TdeVector) {
    let t = array.tde_from_source(source);
    let delays: Vec<f64> = (0..array.num_mics()).map(|m| t.reference_delay(m)).collect();
    let frame = Tones::new(seed, 40).frame(&delays, len, FS);
    let set = build_correlations(&frame, default_max_lag(array, FS)).unwrap();
    (set, t)
}

pub fn point(x: f64, y: f64, z: f64) -> Point {
    DVector::from_vec(vec![x, y, z])
}
