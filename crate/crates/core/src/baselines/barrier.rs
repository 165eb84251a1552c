//! Derivatives of `Δ` and the log-barrier Newton solver on `J − μ log Δ`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grids::InitGrid;
use crate::correlation::CorrelationSet;
use crate::error::{Error, Result};
use crate::geometry::{MicArray, TdeVector};
use crate::result::{LocalizationResult, Method};

/// Pieces shared by the gradient and Hessian of `Δ` on the `M_L` delays.
struct DeltaParts {
    alpha: f64,
    beta: f64,
    gamma: f64,
    a: DVector<f64>,
    u: DVector<f64>,
    ja: DMatrix<f64>,
    jb: DMatrix<f64>,
}

fn delta_parts(array: &MicArray, t: &TdeVector) -> DeltaParts {
    let nu = array.speed_of_sound();
    let sys = array.build_linear_system(t);
    let u = &sys.b - &array.positions()[0];
    let inv = array.inv_ml();
    let t_l = DVector::from_iterator(
        array.local_rows().len(),
        array.local_rows().iter().map(|&k| t[k]),
    );
    let ja = inv * (-2.0 * nu);
    let jb = inv * DMatrix::from_diagonal(&t_l) * (-2.0 * nu * nu);
    DeltaParts {
        alpha: sys.a.dot(&u),
        beta: u.norm_squared(),
        gamma: sys.a.norm_squared() - 1.0,
        a: sys.a,
        u,
        ja,
        jb,
    }
}

fn grad_local(p: &DeltaParts) -> DVector<f64> {
    let grad_alpha = p.ja.tr_mul(&p.u) + p.jb.tr_mul(&p.a);
    grad_alpha * (2.0 * p.alpha)
        - p.jb.tr_mul(&p.u) * (2.0 * p.gamma)
        - p.ja.tr_mul(&p.a) * (2.0 * p.beta)
}

/// `∇Δ` over all `M−1` delays; components outside `M_L` are zero.
pub fn delta_gradient(array: &MicArray, t: &TdeVector) -> DVector<f64> {
    let g = grad_local(&delta_parts(array, t));
    let mut full = DVector::zeros(array.num_delays());
    for (i, &k) in array.local_rows().iter().enumerate() {
        full[k] = g[i];
    }
    full
}

/// Hessian of `Δ` over all `M−1` delays.
pub fn delta_hessian(array: &MicArray, t: &TdeVector) -> DMatrix<f64> {
    let nu = array.speed_of_sound();
    let p = delta_parts(array, t);
    let inv_t = array.inv_ml().transpose();
    let grad_alpha = p.ja.tr_mul(&p.u) + p.jb.tr_mul(&p.a);
    let v = p.ja.tr_mul(&p.a);
    let w = p.jb.tr_mul(&p.u);
    let d = DMatrix::from_diagonal(&(&inv_t * &p.a * (-2.0 * nu * nu)));
    let e = DMatrix::from_diagonal(&(&inv_t * &p.u * (-2.0 * nu * nu)));
    let h_alpha = p.ja.tr_mul(&p.jb) + p.jb.tr_mul(&p.ja) + d;
    let h_beta = (p.jb.tr_mul(&p.jb) + e) * 2.0;
    let h_gamma = p.ja.tr_mul(&p.ja) * 2.0;
    let cross = &v * w.transpose();
    let h = &grad_alpha * grad_alpha.transpose() * 2.0 + h_alpha * (2.0 * p.alpha)
        - (&cross + cross.transpose()) * 4.0
        - h_beta * p.gamma
        - h_gamma * p.beta;
    let n = array.num_delays();
    let mut full = DMatrix::zeros(n, n);
    for (i, &ki) in array.local_rows().iter().enumerate() {
        for (j, &kj) in array.local_rows().iter().enumerate() {
            full[(ki, kj)] = h[(i, j)];
        }
    }
    full
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbConfig {
    /// Starting barrier weight; `1e−2·|J(init)| + 1e−6` when `None`.
    pub mu_initial: Option<f64>,
    pub mu_decay: f64,
    pub outer_rounds: usize,
    pub max_newton_steps: usize,
    /// Stop a round when `‖∇φ‖` falls below this.
    pub grad_tolerance: f64,
    /// Stop a round when the accepted step is shorter than this (seconds).
    pub step_tolerance: f64,
    pub constrained: bool,
    pub eps_eq: f64,
    pub parallel: bool,
}

impl Default for LbConfig {
    fn default() -> Self {
        Self {
            mu_initial: None,
            mu_decay: 0.2,
            outer_rounds: 8,
            max_newton_steps: 50,
            grad_tolerance: 1e-6,
            step_tolerance: 1e-10,
            constrained: true,
            eps_eq: 1e-12,
            parallel: true,
        }
    }
}

impl LbConfig {
    pub fn unconstrained() -> Self {
        Self {
            constrained: false,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mu_initial.is_some_and(|m| !(m > 0.0)) {
            return Err(Error::InvalidConfig("mu_initial must be positive".into()));
        }
        if !(self.mu_decay > 0.0 && self.mu_decay < 1.0) {
            return Err(Error::InvalidConfig("mu_decay must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LbOutcome {
    pub delays: TdeVector,
    pub criterion: f64,
    /// Every accepted iterate, starting with the initial point.
    pub path: Vec<TdeVector>,
    pub newton_steps: usize,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Newton direction for `H d = −g` with `H` shifted until positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let scale = h.amax().max(f64::MIN_POSITIVE);
    let mut eta = 0.0;
    for _ in 0..60 {
        let shifted = h + DMatrix::identity(n, n) * eta;
        if let Some(chol) = shifted.cholesky() {
            let d = chol.solve(&(-g));
            if d.iter().all(|x| x.is_finite()) {
                return Some(d);
            }
        }
        eta = if eta == 0.0 { 1e-10 * scale } else { eta * 10.0 };
    }
    None
}

struct Objective<'a> {
    set: &'a CorrelationSet,
    array: &'a MicArray,
    constrained: bool,
    max_lag: f64,
}

impl Objective<'_> {
    fn evaluable(&self, t: &TdeVector) -> bool {
        let m = self.array.num_mics();
        t.is_finite()
            && (0..m).all(|i| ((i + 1)..m).all(|j| t.pair(i, j).abs() <= self.max_lag))
    }

    /// `φ = J − μ log Δ`; `None` outside the barrier's domain.
    fn value(&self, t: &TdeVector, mu: f64) -> Option<f64> {
        if !self.evaluable(t) {
            return None;
        }
        let j = self.set.criterion_j(t).ok()?;
        if !self.constrained {
            return Some(j);
        }
        let delta = self.array.delta(t);
        (delta > 0.0).then(|| j - mu * delta.ln())
    }

    fn derivatives(&self, t: &TdeVector, mu: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (_, mut g, h) = self.set.criterion_derivatives(t, true)?;
        let mut h = h.expect("hessian requested");
        if self.constrained {
            let delta = self.array.delta(t);
            let gd = delta_gradient(self.array, t);
            let hd = delta_hessian(self.array, t);
            g -= &gd * (mu / delta);
            h -= (hd / delta - &gd * gd.transpose() / (delta * delta)) * mu;
        }
        Ok((g, h))
    }
}

/// Damped Newton descent on `J − μ log Δ` (or on `J` when unconstrained).
///
/// In constrained mode the returned point is the accepted iterate with the
/// smallest `J` among those passing [`MicArray::is_feasible`], which includes
/// the initial point; so `J(result) ≤ J(init)`.
pub fn solve_logbarrier(
    set: &CorrelationSet,
    array: &MicArray,
    init: &TdeVector,
    cfg: &LbConfig,
) -> Result<LbOutcome> {
    cfg.validate()?;
    let objective = Objective {
        set,
        array,
        constrained: cfg.constrained,
        max_lag: set.max_lag(),
    };
    if cfg.constrained && !(array.delta(init) > 0.0) {
        return Err(Error::InitInfeasible);
    }
    let j_init = set.criterion_j(init)?;
    let mut mu = cfg.mu_initial.unwrap_or(1e-2 * j_init.abs() + 1e-6);
    let mut t = init.clone();
    let mut path = vec![t.clone()];
    let mut newton_steps = 0;
    let rounds = if cfg.constrained { cfg.outer_rounds } else { 1 };
    let steps_per_round = if cfg.constrained {
        cfg.max_newton_steps
    } else {
        cfg.max_newton_steps * cfg.outer_rounds
    };

    for _ in 0..rounds {
        let mut phi = objective.value(&t, mu).ok_or(Error::InitInfeasible)?;
        for _ in 0..steps_per_round {
            let (g, h) = objective.derivatives(&t, mu)?;
            if g.norm() < cfg.grad_tolerance {
                break;
            }
            let d = newton_direction(&h, &g).ok_or(Error::NonFiniteStep)?;
            let slope = g.dot(&d);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let trial = TdeVector::from(&(t.to_vector() + &d * step));
                if let Some(v) = objective.value(&trial, mu) {
                    if v <= phi + ARMIJO * step * slope {
                        accepted = Some((trial, v));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((next, v)) = accepted else { break };
            let moved = next.distance(&t);
            t = next;
            phi = v;
            newton_steps += 1;
            path.push(t.clone());
            if moved < cfg.step_tolerance {
                break;
            }
        }
        mu *= cfg.mu_decay;
    }

    let pick = |candidates: &mut dyn Iterator<Item = &TdeVector>| -> Option<(TdeVector, f64)> {
        candidates
            .filter_map(|p| set.criterion_j(p).ok().map(|j| (p, j)))
            .fold(None, |best: Option<(&TdeVector, f64)>, (p, j)| match best {
                Some((_, bj)) if bj <= j => best,
                _ => Some((p, j)),
            })
            .map(|(p, j)| (p.clone(), j))
    };
    let (delays, criterion) = if cfg.constrained {
        pick(&mut path.iter().filter(|p| array.is_feasible(p, cfg.eps_eq)))
            .or_else(|| pick(&mut path.iter()))
            .expect("path holds the initial point")
    } else {
        let j = set.criterion_j(&t)?;
        (t, j)
    };
    Ok(LbOutcome {
        delays,
        criterion,
        path,
        newton_steps,
    })
}

/// Runs [`solve_logbarrier`] from every grid point and keeps the best result.
///
/// Constrained runs keep the least-`J` feasible outcome; unconstrained runs
/// keep the least-`J` outcome. Ties go to the lowest start index.
pub fn solve_multistart(
    set: &CorrelationSet,
    array: &MicArray,
    grid: &InitGrid,
    cfg: &LbConfig,
    method: Method,
) -> Result<LocalizationResult> {
    let start = Instant::now();
    if grid.points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let solve = |init: &TdeVector| solve_logbarrier(set, array, init, cfg).ok();
    let outcomes: Vec<Option<LbOutcome>> = if cfg.parallel {
        grid.points.par_iter().map(solve).collect()
    } else {
        grid.points.iter().map(solve).collect()
    };
    let mut best: Option<&LbOutcome> = None;
    for o in outcomes.iter().flatten() {
        if cfg.constrained && !array.is_feasible(&o.delays, cfg.eps_eq) {
            continue;
        }
        if best.is_none_or(|b| o.criterion < b.criterion) {
            best = Some(o);
        }
    }
    let best = best.ok_or(Error::AllStartsFailed)?;
    let mut result =
        LocalizationResult::from_delays(method, array, Some(set), best.delays.clone(), cfg.eps_eq);
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}
