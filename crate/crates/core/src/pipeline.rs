//! Uniform dispatch from a frame to any of the localization methods.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    estimate_pairwise_delays, make_grid, solve_dm, solve_mult, solve_multistart, GridConfig,
    GridKind, LbConfig, MultConfig,
};
use crate::bnb::{solve_bnb, BnbConfig};
use crate::correlation::{build_correlations, default_max_lag, CorrelationSet, Frame};
use crate::error::Result;
use crate::geometry::MicArray;
use crate::result::{LocalizationResult, Method};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizeParams {
    /// Correlation lag range in seconds; derived from the array when `None`.
    pub max_lag: Option<f64>,
    pub bnb: BnbConfig,
    pub barrier: LbConfig,
    pub grid: GridConfig,
    pub near: MultConfig,
    pub typical: MultConfig,
    pub far: MultConfig,
    pub eps_eq: f64,
}

impl Default for LocalizeParams {
    fn default() -> Self {
        Self {
            max_lag: None,
            bnb: BnbConfig::default(),
            barrier: LbConfig::default(),
            grid: GridConfig::default(),
            near: MultConfig::near(),
            typical: MultConfig::typical(),
            far: MultConfig::far(),
            eps_eq: 1e-12,
        }
    }
}

/// Builds the correlations of `frame` and runs `method`. The reported wall
/// time covers both steps.
pub fn run_localize(
    frame: &Frame,
    array: &MicArray,
    method: Method,
    params: &LocalizeParams,
) -> Result<LocalizationResult> {
    let start = Instant::now();
    let max_lag = params
        .max_lag
        .unwrap_or_else(|| default_max_lag(array, frame.sample_rate()));
    let set = build_correlations(frame, max_lag)?;
    let mut result = run_localize_on(&set, array, method, params)?;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Runs `method` on precomputed correlations.
pub fn run_localize_on(
    set: &CorrelationSet,
    array: &MicArray,
    method: Method,
    params: &LocalizeParams,
) -> Result<LocalizationResult> {
    let start = Instant::now();
    let grid = |kind| make_grid(kind, set, array, &params.grid);
    let constrained = LbConfig { constrained: true, ..params.barrier.clone() };
    let mut result = match method {
        Method::Bnb => solve_bnb(set, array, &params.bnb)?.best,
        Method::Unc => {
            let cfg = LbConfig { constrained: false, ..params.barrier.clone() };
            solve_multistart(set, array, &grid(GridKind::Unconstrained)?, &cfg, method)?
        }
        Method::DLb => solve_multistart(set, array, &grid(GridKind::DenseFeasible)?, &constrained, method)?,
        Method::SLb => solve_multistart(set, array, &grid(GridKind::Sparse)?, &constrained, method)?,
        Method::Dm => solve_dm(set, array, &grid(GridKind::DenseFeasible)?, params.eps_eq)?,
        Method::NMult => solve_mult(set, array, &params.near, method)?,
        Method::TMult => solve_mult(set, array, &params.typical, method)?,
        Method::FMult => solve_mult(set, array, &params.far, method)?,
        Method::Pi => {
            let t = estimate_pairwise_delays(set, array);
            LocalizationResult::from_delays(method, array, Some(set), t, params.eps_eq)
        }
    };
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}
