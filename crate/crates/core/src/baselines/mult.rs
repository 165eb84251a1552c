//! Regularized multilateration on independently estimated pair delays.
//!
//! Each pair contributes the squared-and-rearranged range equation
//! `h_{m,n}(S) = q² + 4⟨S,d⟩² − 4q⟨S,d⟩ − p²‖S−M_n‖²` with `d = M_n − M_m`,
//! `p = 2ν t_{m,n}` and `q = ν² t_{m,n}² + ‖M_n‖² − ‖M_m‖²`, which vanishes
//! whenever `S` lies on either sheet of the pair's hyperboloid. The cost is
//! `Σ h²` plus `λ(‖S − c‖² − r²)²`, pulling solutions towards a sphere of
//! radius `r` around the array centroid `c`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pairwise::estimate_pairwise_delays;
use crate::correlation::CorrelationSet;
use crate::error::{Error, Result};
use crate::geometry::{MicArray, Point, TdeVector};
use crate::result::{LocalizationResult, Method};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultConfig {
    pub radius: f64,
    /// Regularization weight; derived from the array scale when `None`.
    pub lambda: Option<f64>,
    pub direction_grid_size: usize,
    pub max_newton_steps: usize,
    pub eps_eq: f64,
    pub parallel: bool,
}

impl MultConfig {
    pub fn with_radius(radius: f64) -> Self {
        Self {
            radius,
            lambda: None,
            direction_grid_size: 200,
            max_newton_steps: 100,
            eps_eq: 1e-12,
            parallel: true,
        }
    }

    pub fn near() -> Self {
        Self::with_radius(0.9)
    }

    pub fn typical() -> Self {
        Self::with_radius(1.7)
    }

    pub fn far() -> Self {
        Self::with_radius(2.5)
    }
}

impl Default for MultConfig {
    fn default() -> Self {
        Self::typical()
    }
}

struct PairTerm {
    d: DVector<f64>,
    mn: DVector<f64>,
    p2: f64,
    q: f64,
}

fn pair_terms(t: &TdeVector, array: &MicArray) -> Vec<PairTerm> {
    let nu = array.speed_of_sound();
    let pos = array.positions();
    let m_count = array.num_mics();
    let mut terms = Vec::with_capacity(m_count * (m_count - 1) / 2);
    for m in 0..m_count {
        for n in (m + 1)..m_count {
            let tmn = t.pair(m, n);
            let p = 2.0 * nu * tmn;
            terms.push(PairTerm {
                d: &pos[n] - &pos[m],
                mn: pos[n].clone(),
                p2: p * p,
                q: nu * nu * tmn * tmn + pos[n].norm_squared() - pos[m].norm_squared(),
            });
        }
    }
    terms
}

impl PairTerm {
    fn h(&self, s: &Point) -> f64 {
        let sd = s.dot(&self.d);
        self.q * self.q + 4.0 * sd * sd - 4.0 * self.q * sd - self.p2 * (s - &self.mn).norm_squared()
    }

    fn grad(&self, s: &Point) -> DVector<f64> {
        let sd = s.dot(&self.d);
        &self.d * (8.0 * sd - 4.0 * self.q) - (s - &self.mn) * (2.0 * self.p2)
    }

    fn hess(&self) -> DMatrix<f64> {
        let n = self.d.len();
        &self.d * self.d.transpose() * 8.0 - DMatrix::identity(n, n) * (2.0 * self.p2)
    }
}

/// `H(S) = Σ_{m<n} h_{m,n}(S)²`.
pub fn mult_cost(s: &Point, t: &TdeVector, array: &MicArray) -> f64 {
    pair_terms(t, array).iter().map(|p| p.h(s).powi(2)).sum()
}

pub fn mult_gradient(s: &Point, t: &TdeVector, array: &MicArray) -> DVector<f64> {
    pair_terms(t, array)
        .iter()
        .fold(DVector::zeros(s.len()), |acc, p| acc + p.grad(s) * (2.0 * p.h(s)))
}

pub fn mult_hessian(s: &Point, t: &TdeVector, array: &MicArray) -> DMatrix<f64> {
    let n = s.len();
    pair_terms(t, array).iter().fold(DMatrix::zeros(n, n), |acc, p| {
        let g = p.grad(s);
        acc + (&g * g.transpose() + p.hess() * p.h(s)) * 2.0
    })
}

/// Default `λ`: a tenth of the typical `h²` magnitude at radius `r`,
/// expressed per unit of `(‖S−c‖² − r²)²`.
pub fn default_lambda(array: &MicArray, radius: f64) -> f64 {
    let pos = array.positions();
    let m_count = array.num_mics();
    let mut sum = 0.0;
    let mut count = 0.0;
    for m in 0..m_count {
        for n in (m + 1)..m_count {
            sum += (2.0 * radius * (&pos[n] - &pos[m]).norm()).powi(4);
            count += 1.0;
        }
    }
    0.1 * (sum / count) / radius.powi(4)
}

/// `n` quasi-uniform unit vectors (Fibonacci sphere).
pub fn fibonacci_sphere(n: usize) -> Vec<DVector<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            DVector::from_vec(vec![rho * phi.cos(), rho * phi.sin(), z])
        })
        .collect()
}

struct Regularized<'a> {
    terms: &'a [PairTerm],
    center: &'a Point,
    radius: f64,
    lambda: f64,
}

impl Regularized<'_> {
    fn value(&self, s: &Point) -> f64 {
        let r = (s - self.center).norm_squared() - self.radius * self.radius;
        self.terms.iter().map(|p| p.h(s).powi(2)).sum::<f64>() + self.lambda * r * r
    }

    fn derivatives(&self, s: &Point) -> (DVector<f64>, DMatrix<f64>) {
        let n = s.len();
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for p in self.terms {
            let hv = p.h(s);
            let gv = p.grad(s);
            h += (&gv * gv.transpose() + p.hess() * hv) * 2.0;
            g += gv * (2.0 * hv);
        }
        let x = s - self.center;
        let r = x.norm_squared() - self.radius * self.radius;
        g += &x * (4.0 * self.lambda * r);
        h += (&x * x.transpose() * 2.0 + DMatrix::identity(n, n) * r) * (4.0 * self.lambda);
        (g, h)
    }

    fn minimize(&self, start: Point, max_steps: usize) -> (Point, f64) {
        let mut s = start;
        let mut f = self.value(&s);
        for _ in 0..max_steps {
            let (g, h) = self.derivatives(&s);
            let Some(d) = positive_definite_solve(&h, &g) else { break };
            let slope = g.dot(&d);
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..40 {
                let trial = &s + &d * step;
                let v = self.value(&trial);
                if v.is_finite() && v <= f + 1e-4 * step * slope {
                    moved = (&trial - &s).norm() > 1e-12;
                    s = trial;
                    f = v;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        (s, f)
    }
}

fn positive_definite_solve(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let scale = h.amax().max(f64::MIN_POSITIVE);
    let mut eta = 0.0;
    for _ in 0..60 {
        if let Some(chol) = (h + DMatrix::identity(n, n) * eta).cholesky() {
            let d = chol.solve(&(-g));
            if d.iter().all(|x| x.is_finite()) {
                return Some(d);
            }
        }
        eta = if eta == 0.0 { 1e-12 * scale } else { eta * 10.0 };
    }
    None
}

/// Minimizes the regularized cost for the given delays from every direction
/// of the start grid; returns the best point and its cost.
pub fn multilaterate(t: &TdeVector, array: &MicArray, cfg: &MultConfig) -> Result<(Point, f64)> {
    if !(cfg.radius > 0.0) || cfg.lambda.is_some_and(|l| !(l >= 0.0)) {
        return Err(Error::InvalidConfig("radius must be positive and lambda non-negative".into()));
    }
    if array.dim() != 3 {
        return Err(Error::InvalidConfig("the start grid is defined for 3-D arrays".into()));
    }
    let terms = pair_terms(t, array);
    let center = array.centroid();
    let objective = Regularized {
        terms: &terms,
        center: &center,
        radius: cfg.radius,
        lambda: cfg.lambda.unwrap_or_else(|| default_lambda(array, cfg.radius)),
    };
    let starts = fibonacci_sphere(cfg.direction_grid_size);
    let run = |dir: &DVector<f64>| objective.minimize(&center + dir * cfg.radius, cfg.max_newton_steps);
    let results: Vec<(Point, f64)> = if cfg.parallel {
        starts.par_iter().map(run).collect()
    } else {
        starts.iter().map(run).collect()
    };
    results
        .into_iter()
        .filter(|(s, f)| f.is_finite() && s.iter().all(|x| x.is_finite()))
        .fold(None, |best: Option<(Point, f64)>, (s, f)| match best {
            Some((_, bf)) if bf <= f => best,
            _ => Some((s, f)),
        })
        .ok_or(Error::AllStartsFailed)
}

/// Pairwise delay estimation followed by regularized multilateration.
pub fn solve_mult(
    set: &CorrelationSet,
    array: &MicArray,
    cfg: &MultConfig,
    method: Method,
) -> Result<LocalizationResult> {
    let start = Instant::now();
    let t = estimate_pairwise_delays(set, array);
    let (s, _) = multilaterate(&t, array, cfg)?;
    let feasible = array.is_feasible(&t, cfg.eps_eq);
    Ok(LocalizationResult {
        method,
        criterion: set.criterion_j(&t).ok(),
        delays: Some(t),
        position: Some(s.iter().copied().collect()),
        feasible,
        ambiguous: false,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
