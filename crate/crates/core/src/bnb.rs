//! Lipschitz branch and bound over the delay box.
//!
//! Regions are cubes in delay space. Each iteration halves every unconverged
//! cube into `2^{M−1}` children, bounds `J` on each cube by
//! `J(center) ± r·L`, and discards cubes whose lower bound exceeds the best
//! upper bound seen so far.

use std::cmp::Ordering;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationSet;
use crate::error::{Error, Result};
use crate::geometry::{MicArray, TdeVector};
use crate::result::{LocalizationResult, Method};

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub center: TdeVector,
    pub side: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub j_at_center: f64,
}

impl Region {
    /// An unbounded cube; bounds are filled in by [`bound`].
    pub fn new(center: TdeVector, side: f64) -> Self {
        Self {
            center,
            side,
            lower_bound: f64::NEG_INFINITY,
            upper_bound: f64::INFINITY,
            j_at_center: f64::NAN,
        }
    }

    pub fn contains(&self, t: &TdeVector) -> bool {
        self.center
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .all(|(c, x)| (x - c).abs() <= self.side / 2.0)
    }
}

/// How the bounding radius is derived from the cube side `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadiusRule {
    /// Center-to-corner distance `(s/2)·√(M−1)`.
    HalfDiagonal,
    /// The side length `s` itself.
    Side,
}

impl RadiusRule {
    pub fn radius(self, side: f64, dim: usize) -> f64 {
        match self {
            RadiusRule::HalfDiagonal => 0.5 * side * (dim as f64).sqrt(),
            RadiusRule::Side => side,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnbConfig {
    /// Lipschitz constant of `J` (per second); estimated when `None`.
    pub lipschitz: Option<f64>,
    pub lipschitz_pairs: usize,
    pub lipschitz_seed: u64,
    /// Convergence side in seconds; half a sample period when `None`.
    pub min_side: Option<f64>,
    pub max_iterations: usize,
    pub eps_eq: f64,
    pub radius_factor: RadiusRule,
    /// Bound regions on the rayon pool.
    pub parallel: bool,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            lipschitz: None,
            lipschitz_pairs: 1000,
            lipschitz_seed: 0,
            min_side: None,
            max_iterations: 64,
            eps_eq: 1e-12,
            radius_factor: RadiusRule::HalfDiagonal,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbProgress {
    pub iteration: usize,
    pub kept: usize,
    pub discarded: usize,
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct BnbOutcome {
    pub best: LocalizationResult,
    pub region: Region,
    /// Final potential list of the run that produced `region`.
    pub kept: Vec<Region>,
    pub kept_regions: usize,
    pub discarded_regions: usize,
    pub reran_on_discarded: bool,
    pub iterations: usize,
    pub lipschitz: f64,
    pub wall_time: f64,
}

/// Safety factor applied to the largest sampled slope.
const LIPSCHITZ_SAFETY: f64 = 1.5;
const LIPSCHITZ_FLOOR: f64 = 1e-6;

/// Uniform sample of the box `ℬ` by rejection from its bounding box.
pub fn sample_box(array: &MicArray, rng: &mut impl Rng) -> TdeVector {
    let bounds = array.reference_bounds();
    loop {
        let t = TdeVector::new(bounds.iter().map(|b| rng.random_range(-b..=*b)).collect());
        if array.in_box(&t) {
            return t;
        }
    }
}

/// Largest slope `|J(a)−J(b)|/‖a−b‖` over random pairs of `ℬ`, times 1.5.
pub fn estimate_lipschitz(
    set: &CorrelationSet,
    array: &MicArray,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    if pairs < 2 {
        return Err(Error::InvalidConfig("need at least 2 Lipschitz pairs".into()));
    }
    Ok((max_chord_slope(set, array, pairs, seed)? * LIPSCHITZ_SAFETY).max(LIPSCHITZ_FLOOR))
}

/// The raw maximum chord slope, without safety factor or floor.
pub fn max_chord_slope(
    set: &CorrelationSet,
    array: &MicArray,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0_f64;
    for _ in 0..pairs {
        let a = sample_box(array, &mut rng);
        let b = sample_box(array, &mut rng);
        let d = a.distance(&b);
        if d > 0.0 {
            let slope = (set.criterion_j(&a)? - set.criterion_j(&b)?).abs() / d;
            best = best.max(slope);
        }
    }
    Ok(best)
}

/// The smallest cube containing `ℬ`, centered at the origin.
pub fn initial_region(array: &MicArray) -> Region {
    let half = array
        .reference_bounds()
        .into_iter()
        .fold(0.0_f64, f64::max);
    Region::new(TdeVector::zeros(array.num_delays()), 2.0 * half)
}

/// `false` only when the cube provably misses `ℬ`: some pairwise delay range
/// over the cube lies outside `[−t*, t*]`.
pub fn may_intersect_box(array: &MicArray, region: &Region) -> bool {
    let m = array.num_mics();
    let c = &region.center;
    let s = region.side;
    (0..m).all(|i| {
        ((i + 1)..m).all(|j| {
            // t_j − t_i spans c_j − c_i ± s (± s/2 for the reference microphone).
            let half_width = if i == 0 { s / 2.0 } else { s };
            let mid = c.pair(i, j);
            let bound = array.pair_bound(i, j);
            mid - half_width <= bound && mid + half_width >= -bound
        })
    })
}

/// Splits each region into `2^{M−1}` half-side children.
pub fn branch(regions: &[Region]) -> Vec<Region> {
    let mut out = Vec::new();
    for region in regions {
        let dim = region.center.len();
        let quarter = region.side / 4.0;
        for corner in 0..(1usize << dim) {
            let center: Vec<f64> = region
                .center
                .as_slice()
                .iter()
                .enumerate()
                .map(|(k, c)| if corner >> k & 1 == 1 { c + quarter } else { c - quarter })
                .collect();
            out.push(Region::new(TdeVector::new(center), region.side / 2.0));
        }
    }
    out
}

/// Bounds every region and splits them into kept and discarded lists.
///
/// `tau_prev` carries the threshold from earlier iterations, so the returned
/// threshold never increases.
pub fn bound(
    regions: Vec<Region>,
    lipschitz: f64,
    set: &CorrelationSet,
    radius_rule: RadiusRule,
    tau_prev: f64,
    parallel: bool,
) -> Result<(Vec<Region>, Vec<Region>, f64)> {
    let eval = |r: &Region| set.criterion_j(&r.center);
    let values: Vec<Result<f64>> = if parallel {
        regions.par_iter().map(eval).collect()
    } else {
        regions.iter().map(eval).collect()
    };
    let mut bounded = Vec::with_capacity(regions.len());
    for (mut region, j) in regions.into_iter().zip(values) {
        let j = j?;
        let r = radius_rule.radius(region.side, region.center.len()) * lipschitz;
        region.j_at_center = j;
        region.lower_bound = j - r;
        region.upper_bound = j + r;
        bounded.push(region);
    }
    let tau = bounded
        .iter()
        .map(|r| r.upper_bound)
        .fold(tau_prev, f64::min);
    let (kept, discarded) = bounded.into_iter().partition(|r| r.lower_bound <= tau);
    Ok((kept, discarded, tau))
}

fn lexicographic(a: &TdeVector, b: &TdeVector) -> Ordering {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

struct Run {
    kept: Vec<Region>,
    discarded: Vec<Region>,
    iterations: usize,
}

#[allow(clippy::too_many_arguments)]
fn run(
    initial: Vec<Region>,
    set: &CorrelationSet,
    array: &MicArray,
    lipschitz: f64,
    min_side: f64,
    cfg: &BnbConfig,
    iteration_offset: usize,
    progress: &mut Option<&mut dyn FnMut(BnbProgress)>,
) -> Result<Run> {
    let (mut kept, mut discarded, mut tau) = bound(
        initial,
        lipschitz,
        set,
        cfg.radius_factor,
        f64::INFINITY,
        cfg.parallel,
    )?;
    let mut iterations = 0;
    loop {
        let max_side = kept.iter().map(|r| r.side).fold(0.0, f64::max);
        if max_side <= min_side {
            break;
        }
        if iterations >= cfg.max_iterations {
            return Err(Error::IterationsExhausted(cfg.max_iterations));
        }
        iterations += 1;
        let (split, converged): (Vec<Region>, Vec<Region>) =
            kept.into_iter().partition(|r| r.side > min_side);
        let children: Vec<Region> = branch(&split)
            .into_iter()
            .filter(|r| may_intersect_box(array, r))
            .collect();
        let (new_kept, new_discarded, new_tau) =
            bound(children, lipschitz, set, cfg.radius_factor, tau, cfg.parallel)?;
        tau = new_tau;
        // Regions that stopped splitting keep their bounds but face the new threshold.
        let (still, dropped): (Vec<Region>, Vec<Region>) =
            converged.into_iter().partition(|r| r.lower_bound <= tau);
        kept = still.into_iter().chain(new_kept).collect();
        discarded.extend(dropped);
        discarded.extend(new_discarded);
        if let Some(cb) = progress.as_mut() {
            cb(BnbProgress {
                iteration: iteration_offset + iterations,
                kept: kept.len(),
                discarded: discarded.len(),
                tau,
            });
        }
    }
    Ok(Run {
        kept,
        discarded,
        iterations,
    })
}

fn select_best<'a>(regions: &'a [Region], array: &MicArray, eps_eq: f64) -> Option<&'a Region> {
    regions
        .iter()
        .filter(|r| array.is_feasible(&r.center, eps_eq))
        .min_by(|a, b| {
            a.j_at_center
                .total_cmp(&b.j_at_center)
                .then_with(|| lexicographic(&a.center, &b.center))
        })
}

pub fn solve_bnb(set: &CorrelationSet, array: &MicArray, cfg: &BnbConfig) -> Result<BnbOutcome> {
    solve_bnb_with_progress(set, array, cfg, None)
}

pub fn solve_bnb_with_progress(
    set: &CorrelationSet,
    array: &MicArray,
    cfg: &BnbConfig,
    mut progress: Option<&mut dyn FnMut(BnbProgress)>,
) -> Result<BnbOutcome> {
    let start = Instant::now();
    if set.num_channels() != array.num_mics() {
        return Err(Error::DimensionMismatch {
            expected: array.num_mics(),
            got: set.num_channels(),
        });
    }
    let lipschitz = match cfg.lipschitz {
        Some(l) if l > 0.0 && l.is_finite() => l,
        Some(l) => return Err(Error::InvalidConfig(format!("Lipschitz constant {l}"))),
        None => estimate_lipschitz(set, array, cfg.lipschitz_pairs, cfg.lipschitz_seed)?,
    };
    let min_side = cfg.min_side.unwrap_or(0.5 / set.sample_rate());
    if !(min_side > 0.0) {
        return Err(Error::InvalidConfig(format!("min_side {min_side}")));
    }

    let first = run(
        vec![initial_region(array)],
        set,
        array,
        lipschitz,
        min_side,
        cfg,
        0,
        &mut progress,
    )?;
    let mut iterations = first.iterations;
    let mut reran = false;
    let (chosen, kept, discarded_regions) =
        match select_best(&first.kept, array, cfg.eps_eq) {
            Some(r) => (r.clone(), first.kept, first.discarded.len()),
            None => {
                reran = true;
                let second = run(
                    first.discarded,
                    set,
                    array,
                    lipschitz,
                    min_side,
                    cfg,
                    iterations,
                    &mut progress,
                )?;
                iterations += second.iterations;
                let chosen = select_best(&second.kept, array, cfg.eps_eq)
                    .ok_or(Error::NoFeasibleRegion)?
                    .clone();
                (chosen, second.kept, second.discarded.len())
            }
        };

    let mut best = LocalizationResult::from_delays(
        Method::Bnb,
        array,
        Some(set),
        chosen.center.clone(),
        cfg.eps_eq,
    );
    let wall_time = start.elapsed().as_secs_f64();
    best.wall_time = wall_time;
    Ok(BnbOutcome {
        best,
        region: chosen,
        kept_regions: kept.len(),
        kept,
        discarded_regions,
        reran_on_discarded: reran,
        iterations,
        lipschitz,
        wall_time,
    })
}
