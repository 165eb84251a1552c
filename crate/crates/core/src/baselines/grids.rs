//! Initialization grids and direct grid minimization.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationSet;
use crate::error::{Error, Result};
use crate::geometry::{MicArray, TdeVector};
use crate::result::{LocalizationResult, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    /// Lattice points of `ℬ` passing the feasibility test.
    DenseFeasible,
    /// Lattice points of `ℬ`.
    Unconstrained,
    /// Products of the strongest local maxima of each `ρ_{1,m}`.
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Lattice step as a fraction of the largest `t*_{1,m}`.
    pub step_fraction: f64,
    /// Peaks kept per reference pair in the sparse grid.
    pub sparse_peaks: usize,
    pub eps_eq: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            step_fraction: 0.2,
            sparse_peaks: 3,
            eps_eq: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitGrid {
    pub kind: GridKind,
    pub points: Vec<TdeVector>,
}

/// Centered lattice `k·h` with `h = step_fraction·max_m t*_{1,m}`, restricted to `ℬ`.
fn lattice(array: &MicArray, step_fraction: f64) -> Vec<TdeVector> {
    let bounds = array.reference_bounds();
    let h = step_fraction * bounds.iter().copied().fold(0.0, f64::max);
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&b| {
            let k = (b / h * (1.0 + 1e-12)).floor() as i64;
            (-k..=k).map(|i| i as f64 * h).collect()
        })
        .collect();
    let total: usize = axes.iter().map(|a| a.len()).product();
    (0..total)
        .map(|mut idx| {
            TdeVector::new(
                axes.iter()
                    .map(|axis| {
                        let v = axis[idx % axis.len()];
                        idx /= axis.len();
                        v
                    })
                    .collect(),
            )
        })
        .filter(|t| array.in_box(t))
        .collect()
}

/// Integer lags of the `count` largest local maxima of `ρ_{1,m}` within
/// `±t*_{1,m}`, padded with the largest remaining samples when there are fewer peaks.
fn top_peaks(set: &CorrelationSet, array: &MicArray, m: usize, count: usize) -> Vec<f64> {
    let f = set.function(0, m);
    let fs = set.sample_rate();
    let k = ((array.pair_bound(0, m) * fs).floor() as isize).min(f.max_lag() as isize);
    let lags: Vec<isize> = (-k..=k).collect();
    let value = |lag: isize| f.sample(lag);
    let is_peak = |lag: isize| {
        let left = lag > -(f.max_lag() as isize) && value(lag - 1) > value(lag);
        let right = lag < f.max_lag() as isize && value(lag + 1) > value(lag);
        !left && !right
    };
    let mut peaks: Vec<isize> = lags.iter().copied().filter(|&l| is_peak(l)).collect();
    let by_value = |a: &isize, b: &isize| value(*b).total_cmp(&value(*a)).then(a.cmp(b));
    peaks.sort_by(by_value);
    peaks.truncate(count);
    if peaks.len() < count {
        let mut rest: Vec<isize> = lags.iter().copied().filter(|l| !peaks.contains(l)).collect();
        rest.sort_by(by_value);
        peaks.extend(rest.into_iter().take(count - peaks.len()));
    }
    peaks.into_iter().map(|l| l as f64 / fs).collect()
}

pub fn make_grid(
    kind: GridKind,
    set: &CorrelationSet,
    array: &MicArray,
    cfg: &GridConfig,
) -> Result<InitGrid> {
    if !(cfg.step_fraction > 0.0) || cfg.sparse_peaks == 0 {
        return Err(Error::InvalidConfig("grid sizes must be positive".into()));
    }
    let points = match kind {
        GridKind::Unconstrained => lattice(array, cfg.step_fraction),
        GridKind::DenseFeasible => lattice(array, cfg.step_fraction)
            .into_iter()
            .filter(|t| array.is_feasible(t, cfg.eps_eq))
            .collect(),
        GridKind::Sparse => {
            let per_axis: Vec<Vec<f64>> = (1..array.num_mics())
                .map(|m| top_peaks(set, array, m, cfg.sparse_peaks))
                .collect();
            let total: usize = per_axis.iter().map(|a| a.len()).product();
            (0..total)
                .map(|mut idx| {
                    TdeVector::new(
                        per_axis
                            .iter()
                            .map(|axis| {
                                let v = axis[idx % axis.len()];
                                idx /= axis.len();
                                v
                            })
                            .collect(),
                    )
                })
                .collect()
        }
    };
    if points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(InitGrid { kind, points })
}

/// The grid point with the least `J`, lowest index on ties.
pub fn solve_dm(
    set: &CorrelationSet,
    array: &MicArray,
    grid: &InitGrid,
    eps_eq: f64,
) -> Result<LocalizationResult> {
    let start = Instant::now();
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in grid.points.iter().enumerate() {
        let j = set.criterion_j(t)?;
        if best.is_none_or(|(_, bj)| j < bj) {
            best = Some((i, j));
        }
    }
    let (i, _) = best.ok_or(Error::EmptyGrid)?;
    let mut result = LocalizationResult::from_delays(
        Method::Dm,
        array,
        Some(set),
        grid.points[i].clone(),
        eps_eq,
    );
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}
