//! Normalized cross-correlation functions and the determinant criterion.
//!
//! `ρ_{m,n}(k) = Σ_t x_m(t) x_n(t+k) / √(E_m E_n)` is sampled on integer lags
//! `|k| ≤ K` of zero-mean channels (biased estimator, full-window energies) and
//! interpolated by a natural cubic spline. With `x_n(t) = x_m(t−d)` the peak
//! sits at `k = d`, i.e. at `t_{m,n}·fs`.
//!
//! The criterion is `J(t) = det R(t)` with `R_{ij} = ρ_{ij}(t_j − t_i)`,
//! `t_0 = 0` and `t_k = t_{1,k+1}`.

mod spline;

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};

pub use spline::NaturalSpline;

use crate::error::{Error, Result};
use crate::geometry::{MicArray, TdeVector};

/// Regularization added to `R` when its inverse is unusable.
const SINGULAR_SHIFT: f64 = 1e-10;

/// One analysis window of `M` synchronized channels.
#[derive(Debug, Clone)]
pub struct Frame {
    channels: Vec<Vec<f64>>,
    sample_rate: f64,
}

impl Frame {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidFrame(format!("sample rate {sample_rate}")));
        }
        let Some(first) = channels.first() else {
            return Err(Error::InvalidFrame("no channels".into()));
        };
        let len = first.len();
        if len < 2 {
            return Err(Error::InvalidFrame("channels need at least 2 samples".into()));
        }
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidFrame("channels differ in length".into()));
        }
        if channels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidFrame("non-finite sample".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    /// Samples `[start, start+len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::InvalidFrame(format!(
                "window [{start}, {}) exceeds {} samples",
                start + len,
                self.len()
            )));
        }
        Self::new(
            self.channels
                .iter()
                .map(|c| c[start..start + len].to_vec())
                .collect(),
            self.sample_rate,
        )
    }
}

/// Sampled `ρ_{m,n}` on lags `−K..=K` with its spline.
#[derive(Debug, Clone)]
pub struct CorrelationFunction {
    max_lag: usize,
    spline: NaturalSpline,
}

impl CorrelationFunction {
    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    /// Stored sample at integer lag `k`.
    pub fn sample(&self, k: isize) -> f64 {
        self.spline.knots()[(k + self.max_lag as isize) as usize]
    }

    pub fn samples(&self) -> &[f64] {
        self.spline.knots()
    }

    /// Value and derivatives (per sample) at a fractional lag, clamped to `[−1, 1]`.
    fn eval(&self, lag: f64) -> ((f64, f64, f64), bool) {
        let (v, d1, d2) = self.spline.eval(lag + self.max_lag as f64);
        if v > 1.0 {
            ((1.0, 0.0, 0.0), true)
        } else if v < -1.0 {
            ((-1.0, 0.0, 0.0), true)
        } else {
            ((v, d1, d2), false)
        }
    }
}

/// `ρ_{m,n}` for every pair `m < n`, plus channel energies.
#[derive(Debug)]
pub struct CorrelationSet {
    num_channels: usize,
    sample_rate: f64,
    max_lag: usize,
    energies: Vec<f64>,
    functions: Vec<CorrelationFunction>,
    clamp_events: AtomicUsize,
}

impl Clone for CorrelationSet {
    fn clone(&self) -> Self {
        Self {
            num_channels: self.num_channels,
            sample_rate: self.sample_rate,
            max_lag: self.max_lag,
            energies: self.energies.clone(),
            functions: self.functions.clone(),
            clamp_events: AtomicUsize::new(self.clamp_events.load(Ordering::Relaxed)),
        }
    }
}

/// Lag range that keeps every pair lag of the bounding cube `[−T, T]^{M−1}`
/// tabulated, `T = max_m t*_{1,m}`, plus two samples of guard.
pub fn default_max_lag(array: &MicArray, sample_rate: f64) -> f64 {
    let t = array
        .reference_bounds()
        .into_iter()
        .fold(0.0_f64, f64::max);
    (2.0 * t).max(array.max_pair_bound()) + 2.0 / sample_rate
}

pub fn build_correlations(frame: &Frame, max_lag: f64) -> Result<CorrelationSet> {
    let k_max = (max_lag * frame.sample_rate()).ceil().max(0.0) as usize;
    let len = frame.len();
    if 2 * k_max > len {
        return Err(Error::FrameTooShort { len, lag: k_max });
    }
    let centered: Vec<Vec<f64>> = frame
        .channels()
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            c.iter().map(|x| x - mean).collect()
        })
        .collect();
    let energies: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum())
        .collect();
    if let Some(m) = energies.iter().position(|&e| e <= 0.0) {
        return Err(Error::SilentChannel(m));
    }
    let m_count = frame.num_channels();
    let mut functions = Vec::with_capacity(m_count * (m_count - 1) / 2);
    for m in 0..m_count {
        for n in (m + 1)..m_count {
            let norm = (energies[m] * energies[n]).sqrt();
            let (xm, xn) = (&centered[m], &centered[n]);
            let values: Vec<f64> = (-(k_max as isize)..=k_max as isize)
                .map(|k| {
                    let sum: f64 = if k >= 0 {
                        let k = k as usize;
                        xm[..len - k].iter().zip(&xn[k..]).map(|(a, b)| a * b).sum()
                    } else {
                        let k = (-k) as usize;
                        xm[k..].iter().zip(&xn[..len - k]).map(|(a, b)| a * b).sum()
                    };
                    (sum / norm).clamp(-1.0, 1.0)
                })
                .collect();
            functions.push(CorrelationFunction {
                max_lag: k_max,
                spline: NaturalSpline::new(values),
            });
        }
    }
    Ok(CorrelationSet {
        num_channels: m_count,
        sample_rate: frame.sample_rate(),
        max_lag: k_max,
        energies,
        functions,
        clamp_events: AtomicUsize::new(0),
    })
}

impl CorrelationSet {
    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Largest tabulated lag in samples.
    pub fn max_lag_samples(&self) -> usize {
        self.max_lag
    }

    /// Largest tabulated lag in seconds.
    pub fn max_lag(&self) -> f64 {
        self.max_lag as f64 / self.sample_rate
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Number of interpolated values clamped to `[−1, 1]` so far.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events.load(Ordering::Relaxed)
    }

    fn index(&self, m: usize, n: usize) -> usize {
        debug_assert!(m < n);
        m * (2 * self.num_channels - m - 1) / 2 + (n - m - 1)
    }

    /// The stored function for `m < n`.
    pub fn function(&self, m: usize, n: usize) -> &CorrelationFunction {
        assert!(m < n && n < self.num_channels, "invalid pair ({m}, {n})");
        &self.functions[self.index(m, n)]
    }

    /// `ρ_{m,n}(τ)` and its first two derivatives in seconds.
    pub fn eval_rho_derivs(&self, m: usize, n: usize, tau: f64) -> Result<(f64, f64, f64)> {
        if m >= self.num_channels || n >= self.num_channels {
            return Err(Error::InvalidPair(m, n));
        }
        if m == n {
            return Ok((1.0, 0.0, 0.0));
        }
        let max = self.max_lag();
        if !tau.is_finite() || tau.abs() > max * (1.0 + 1e-12) {
            return Err(Error::LagOutOfRange { lag: tau, max });
        }
        let fs = self.sample_rate;
        let (f, lag, sign) = if m < n {
            (self.function(m, n), tau * fs, 1.0)
        } else {
            (self.function(n, m), -tau * fs, -1.0)
        };
        let ((v, d1, d2), clamped) = f.eval(lag);
        if clamped {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
        }
        Ok((v, sign * d1 * fs, d2 * fs * fs))
    }

    pub fn eval_rho(&self, m: usize, n: usize, tau: f64) -> Result<f64> {
        self.eval_rho_derivs(m, n, tau).map(|d| d.0)
    }

    fn check_len(&self, t: &TdeVector) -> Result<()> {
        if t.len() + 1 != self.num_channels {
            return Err(Error::DimensionMismatch {
                expected: self.num_channels - 1,
                got: t.len(),
            });
        }
        Ok(())
    }

    /// Entries of `R`, `ρ'` and `ρ''` at the pair lags implied by `t`.
    fn tables(&self, t: &TdeVector) -> Result<[DMatrix<f64>; 3]> {
        self.check_len(t)?;
        let m = self.num_channels;
        let mut r = DMatrix::identity(m, m);
        let mut d1 = DMatrix::zeros(m, m);
        let mut d2 = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in (i + 1)..m {
                let (v, a, b) = self.eval_rho_derivs(i, j, t.pair(i, j))?;
                r[(i, j)] = v;
                r[(j, i)] = v;
                d1[(i, j)] = a;
                d1[(j, i)] = a;
                d2[(i, j)] = b;
                d2[(j, i)] = b;
            }
        }
        Ok([r, d1, d2])
    }

    /// `R(t)`: symmetric, unit diagonal.
    pub fn correlation_matrix(&self, t: &TdeVector) -> Result<DMatrix<f64>> {
        self.check_len(t)?;
        let m = self.num_channels;
        let mut r = DMatrix::identity(m, m);
        for i in 0..m {
            for j in (i + 1)..m {
                let v = self.eval_rho(i, j, t.pair(i, j))?;
                r[(i, j)] = v;
                r[(j, i)] = v;
            }
        }
        Ok(r)
    }

    pub fn criterion_j(&self, t: &TdeVector) -> Result<f64> {
        Ok(self.correlation_matrix(t)?.determinant())
    }

    /// `J`, `∇J` and (optionally) the Hessian of `J`.
    pub fn criterion_derivatives(
        &self,
        t: &TdeVector,
        with_hessian: bool,
    ) -> Result<(f64, DVector<f64>, Option<DMatrix<f64>>)> {
        let [r, d1, d2] = self.tables(t)?;
        let m = self.num_channels;
        let n = m - 1;
        let det = r.clone().determinant();
        let inv = usable_inverse(&r);

        // ∂R/∂t_k: only row and column k (microphone k) depend on t_k;
        // ∂τ_ij/∂t_k = δ_jk − δ_ik.
        let dr: Vec<DMatrix<f64>> = (1..m)
            .map(|k| {
                let mut d = DMatrix::zeros(m, m);
                for i in 0..m {
                    if i == k {
                        continue;
                    }
                    // τ_{ik} grows with t_k; τ_{ki} shrinks, but ρ_{ki}(τ) = ρ_{ik}(−τ)
                    // makes both entries equal.
                    let v = if i < k { d1[(i, k)] } else { -d1[(k, i)] };
                    d[(i, k)] = v;
                    d[(k, i)] = v;
                }
                d
            })
            .collect();
        let prod: Vec<DMatrix<f64>> = dr.iter().map(|d| &inv * d).collect();
        let traces: Vec<f64> = prod.iter().map(|p| p.trace()).collect();
        let grad = DVector::from_fn(n, |k, _| det * traces[k]);

        let hess = with_hessian.then(|| {
            let mut h = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in a..n {
                    let (ka, kb) = (a + 1, b + 1);
                    // ∂²R/∂t_a∂t_b: entry (i,j) carries ρ''·(δ_ja−δ_ia)(δ_jb−δ_ib).
                    let mut d_ab = DMatrix::zeros(m, m);
                    for i in 0..m {
                        for j in 0..m {
                            if i == j {
                                continue;
                            }
                            let sa = (j == ka) as i32 as f64 - (i == ka) as i32 as f64;
                            let sb = (j == kb) as i32 as f64 - (i == kb) as i32 as f64;
                            if sa != 0.0 && sb != 0.0 {
                                d_ab[(i, j)] = d2[(i, j)] * sa * sb;
                            }
                        }
                    }
                    let cross = (&prod[a] * &prod[b]).trace();
                    let second = (&inv * &d_ab).trace();
                    let v = det * (traces[a] * traces[b] - cross + second);
                    h[(a, b)] = v;
                    h[(b, a)] = v;
                }
            }
            h
        });
        Ok((det, grad, hess))
    }

    pub fn criterion_gradient(&self, t: &TdeVector) -> Result<DVector<f64>> {
        Ok(self.criterion_derivatives(t, false)?.1)
    }

    pub fn criterion_hessian(&self, t: &TdeVector) -> Result<DMatrix<f64>> {
        Ok(self
            .criterion_derivatives(t, true)?
            .2
            .expect("hessian requested"))
    }
}

fn usable_inverse(r: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(inv) = r.clone().try_inverse() {
        let rcond = 1.0 / (r.norm() * inv.norm());
        if inv.iter().all(|x| x.is_finite()) && rcond > 1e-14 {
            return inv;
        }
    }
    let shifted = r + DMatrix::identity(r.nrows(), r.ncols()) * SINGULAR_SHIFT;
    shifted
        .clone()
        .try_inverse()
        .unwrap_or_else(|| DMatrix::identity(r.nrows(), r.ncols()) / SINGULAR_SHIFT)
}

#[cfg(test)]
mod tests;
