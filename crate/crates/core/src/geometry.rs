//! Source-space geometry of a non-coplanar microphone array.
//!
//! Everything here is a pure function of the microphone positions and the
//! speed of sound: the per-pair delay bounds, the locus of sources that
//! explain a single pairwise delay, the feasibility predicates on a full
//! delay vector, and the closed-form mapping from a feasible delay vector to
//! the source position.
//!
//! Delay vectors use the first microphone as reference: entry `k` holds
//! `t_{1,k+2} = (‖S−M_{k+2}‖ − ‖S−M_1‖)/ν`. Microphone indices in this API are
//! zero-based, so the reference microphone is index 0.
//!
//! Subtracting the squared range equations of microphone `m` and of the
//! reference gives one row of the system
//!
//! ```text
//! M S + P ‖S − M_1‖ + Q = 0,   row m: 2(M_m − M_1)ᵀ,  p = 2ν t_{1,m},
//!                              q = ν² t_{1,m}² + ‖M_1‖² − ‖M_m‖²
//! ```
//!
//! `N` linearly independent rows (the `M_L` block) fix `S = A w + B` with
//! `w = ‖S − M_1‖`, leaving a scalar quadratic in `w`. The remaining rows
//! (`M_E`) become equality constraints on the delays.

use std::ops::Index;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the source space `ℝᴺ`, in meters.
pub type Point = DVector<f64>;

/// Relative tolerance used to decide the boundary cases of the two-microphone locus.
const LOCUS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// Ceiling on the condition number of the `M_L` block.
    pub max_condition: f64,
    /// Delay-matching tolerance (seconds) used to pick the genuine root.
    pub loc_tolerance: f64,
    /// Bound on `‖ℰ‖²` accepted by [`MicArray::localize`].
    pub eq_tolerance: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            max_condition: 1e6,
            loc_tolerance: 1e-9,
            eq_tolerance: 1e-12,
        }
    }
}

/// The `M−1` free delays `(t_{1,2}, …, t_{1,M})` in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TdeVector(Vec<f64>);

impl TdeVector {
    pub fn new(delays: Vec<f64>) -> Self {
        Self(delays)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Arrival delay of microphone `m` relative to the reference (`t_{1,m}`, zero for `m = 0`).
    #[inline]
    pub fn reference_delay(&self, m: usize) -> f64 {
        if m == 0 {
            0.0
        } else {
            self.0[m - 1]
        }
    }

    /// The derived pair delay `t_{m,n} = −t_{1,m} + t_{1,n}`.
    #[inline]
    pub fn pair(&self, m: usize, n: usize) -> f64 {
        self.reference_delay(n) - self.reference_delay(m)
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|t| -t).collect())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|t| t.is_finite())
    }
}

impl Index<usize> for TdeVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl From<Vec<f64>> for TdeVector {
    fn from(delays: Vec<f64>) -> Self {
        Self(delays)
    }
}

impl From<&DVector<f64>> for TdeVector {
    fn from(v: &DVector<f64>) -> Self {
        Self(v.iter().copied().collect())
    }
}

/// `P`, `Q` and their `L`/`E` splits, plus `A = −M_L⁻¹P_L` and `B = −M_L⁻¹Q_L`.
#[derive(Debug, Clone)]
pub struct LinearSystemParts {
    pub p: DVector<f64>,
    pub q: DVector<f64>,
    pub p_l: DVector<f64>,
    pub q_l: DVector<f64>,
    pub p_e: DVector<f64>,
    pub q_e: DVector<f64>,
    pub a: DVector<f64>,
    pub b: DVector<f64>,
}

/// Locus of the sources explaining a single pairwise delay `t̂_{m,n}`.
///
/// `H = (M_m + M_n)/2` and `V = M_m − M_n`.
#[derive(Debug, Clone, PartialEq)]
pub enum LocusClass {
    EmptySet,
    /// `{H + μV : μ ≥ 1/2}`, reached when `t̂ = t*`.
    HalfLineMax { h: Point, v: Point },
    /// `{H − μV : μ ≥ 1/2}`, reached when `t̂ = −t*`.
    HalfLineMin { h: Point, v: Point },
    /// Hyperplane through `H` orthogonal to `V` (`t̂ = 0`).
    Hyperplane { h: Point, v: Point },
    /// The sheet of the two-sheet hyperboloid with foci `M_m`, `M_n` whose
    /// points satisfy `‖S−M_n‖ − ‖S−M_m‖ = range_difference`.
    HyperboloidSheet {
        h: Point,
        v: Point,
        range_difference: f64,
    },
}

impl LocusClass {
    /// Membership test against the closed-form description of the class,
    /// with a distance tolerance in meters.
    pub fn contains(&self, s: &Point, tol: f64) -> bool {
        match self {
            LocusClass::EmptySet => false,
            LocusClass::HalfLineMax { h, v } => on_half_line(s, h, v, tol),
            LocusClass::HalfLineMin { h, v } => on_half_line(s, h, &(-v), tol),
            LocusClass::Hyperplane { h, v } => ((s - h).dot(v) / v.norm()).abs() <= tol,
            LocusClass::HyperboloidSheet {
                h,
                v,
                range_difference,
            } => {
                let (axial, radial) = axial_radial(s, h, v);
                let c = v.norm() / 2.0;
                let a = range_difference.abs() / 2.0;
                let b2 = c * c - a * a;
                if axial.signum() != range_difference.signum() {
                    return false;
                }
                let sheet_axial = a * (1.0 + radial * radial / b2).sqrt();
                (axial.abs() - sheet_axial).abs() <= tol
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LocusClass::EmptySet => "empty",
            LocusClass::HalfLineMax { .. } => "half-line-max",
            LocusClass::HalfLineMin { .. } => "half-line-min",
            LocusClass::Hyperplane { .. } => "hyperplane",
            LocusClass::HyperboloidSheet { .. } => "hyperboloid-sheet",
        }
    }
}

fn axial_radial(s: &Point, h: &Point, v: &Point) -> (f64, f64) {
    let u = v / v.norm();
    let d = s - h;
    let axial = d.dot(&u);
    let radial = (d.norm_squared() - axial * axial).max(0.0).sqrt();
    (axial, radial)
}

fn on_half_line(s: &Point, h: &Point, v: &Point, tol: f64) -> bool {
    let (axial, radial) = axial_radial(s, h, v);
    radial <= tol && axial >= v.norm() / 2.0 - tol
}

/// Result of the localization mapping with the disambiguation details.
#[derive(Debug, Clone)]
pub struct Localization {
    pub position: Point,
    /// The auxiliary scalar `w = ‖S − M_1‖` of the chosen root.
    pub w: f64,
    /// Both roots reproduced the delays; `alternative` holds the other one.
    pub ambiguous: bool,
    pub alternative: Option<Point>,
}

/// One root of the localization quadratic.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub w: f64,
    pub position: Point,
    /// Distance (seconds) between the delays this point produces on the
    /// `M_L` rows and the requested ones.
    pub delay_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayDescription {
    speed_of_sound: f64,
    positions: Vec<Vec<f64>>,
}

/// Microphone positions, speed of sound and the cached array matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ArrayDescription", into = "ArrayDescription")]
pub struct MicArray {
    positions: Vec<Point>,
    speed_of_sound: f64,
    config: GeometryConfig,
    matrix_m: DMatrix<f64>,
    local_rows: Vec<usize>,
    extra_rows: Vec<usize>,
    inv_ml: DMatrix<f64>,
    matrix_me: DMatrix<f64>,
    pair_bounds: DMatrix<f64>,
    squared_norms: Vec<f64>,
}

impl TryFrom<ArrayDescription> for MicArray {
    type Error = Error;

    fn try_from(desc: ArrayDescription) -> Result<Self> {
        MicArray::from_coords(&desc.positions, desc.speed_of_sound)
    }
}

impl From<MicArray> for ArrayDescription {
    fn from(array: MicArray) -> Self {
        ArrayDescription {
            speed_of_sound: array.speed_of_sound,
            positions: array
                .positions
                .iter()
                .map(|p| p.iter().copied().collect())
                .collect(),
        }
    }
}

impl MicArray {
    pub fn new(positions: Vec<Point>, speed_of_sound: f64) -> Result<Self> {
        Self::with_config(positions, speed_of_sound, GeometryConfig::default())
    }

    pub fn from_coords(coords: &[Vec<f64>], speed_of_sound: f64) -> Result<Self> {
        let positions = coords
            .iter()
            .map(|c| DVector::from_column_slice(c))
            .collect();
        Self::new(positions, speed_of_sound)
    }

    pub fn with_config(
        positions: Vec<Point>,
        speed_of_sound: f64,
        config: GeometryConfig,
    ) -> Result<Self> {
        if !(speed_of_sound > 0.0 && speed_of_sound.is_finite()) {
            return Err(Error::InvalidArray(format!(
                "speed of sound must be positive, got {speed_of_sound}"
            )));
        }
        let Some(first) = positions.first() else {
            return Err(Error::InvalidArray("no microphones".into()));
        };
        let dim = first.len();
        if dim < 2 {
            return Err(Error::InvalidArray("source space must have dimension ≥ 2".into()));
        }
        if let Some(p) = positions.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        if positions.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidArray("non-finite microphone coordinate".into()));
        }
        let num_mics = positions.len();
        if num_mics < dim + 1 {
            return Err(Error::InvalidArray(format!(
                "{num_mics} microphones cannot span a {dim}-dimensional space"
            )));
        }

        let mut pair_bounds = DMatrix::zeros(num_mics, num_mics);
        for m in 0..num_mics {
            for n in (m + 1)..num_mics {
                let d = (&positions[m] - &positions[n]).norm() / speed_of_sound;
                if d <= 0.0 {
                    return Err(Error::InvalidArray(format!(
                        "microphones {m} and {n} coincide"
                    )));
                }
                pair_bounds[(m, n)] = d;
                pair_bounds[(n, m)] = d;
            }
        }

        let mut matrix_m = DMatrix::zeros(num_mics - 1, dim);
        for k in 1..num_mics {
            let row = (&positions[k] - &positions[0]) * 2.0;
            matrix_m.row_mut(k - 1).copy_from(&row.transpose());
        }

        let local_rows = select_local_rows(&matrix_m, dim);
        let extra_rows: Vec<usize> = (0..num_mics - 1)
            .filter(|r| !local_rows.contains(r))
            .collect();
        let matrix_ml = matrix_m.select_rows(local_rows.iter());
        let sv = matrix_ml.clone().svd(false, false).singular_values;
        let (smin, smax) = (sv.min(), sv.max());
        if smin <= 0.0 || smax / smin > config.max_condition {
            return Err(Error::InvalidArray(format!(
                "microphones are (nearly) contained in a hyperplane; condition number {:e}",
                smax / smin
            )));
        }
        let inv_ml = matrix_ml
            .try_inverse()
            .ok_or_else(|| Error::InvalidArray("singular M_L block".into()))?;
        let matrix_me = matrix_m.select_rows(extra_rows.iter());
        let squared_norms = positions.iter().map(|p| p.norm_squared()).collect();

        Ok(Self {
            positions,
            speed_of_sound,
            config,
            matrix_m,
            local_rows,
            extra_rows,
            inv_ml,
            matrix_me,
            pair_bounds,
            squared_norms,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("array serialization cannot fail")
    }

    pub fn num_mics(&self) -> usize {
        self.positions.len()
    }

    /// Dimension `N` of the source space.
    pub fn dim(&self) -> usize {
        self.positions[0].len()
    }

    /// Number of free delays, `M − 1`.
    pub fn num_delays(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn config(&self) -> &GeometryConfig {
        &self.config
    }

    pub fn centroid(&self) -> Point {
        let sum = self
            .positions
            .iter()
            .fold(DVector::zeros(self.dim()), |acc, p| acc + p);
        sum / self.num_mics() as f64
    }

    /// `t*_{m,n} = ‖M_m − M_n‖/ν`.
    pub fn pair_bound(&self, m: usize, n: usize) -> f64 {
        self.pair_bounds[(m, n)]
    }

    /// `(t*_{1,2}, …, t*_{1,M})`.
    pub fn reference_bounds(&self) -> Vec<f64> {
        (1..self.num_mics())
            .map(|m| self.pair_bounds[(0, m)])
            .collect()
    }

    pub fn max_pair_bound(&self) -> f64 {
        self.pair_bounds.max()
    }

    /// The `(M−1)×N` matrix with rows `2(M_{m+1} − M_1)ᵀ`.
    pub fn matrix_m(&self) -> &DMatrix<f64> {
        &self.matrix_m
    }

    /// Rows of [`matrix_m`](Self::matrix_m) (equivalently, delay indices) forming `M_L`.
    pub fn local_rows(&self) -> &[usize] {
        &self.local_rows
    }

    pub fn extra_rows(&self) -> &[usize] {
        &self.extra_rows
    }

    pub fn inv_ml(&self) -> &DMatrix<f64> {
        &self.inv_ml
    }

    pub fn matrix_me(&self) -> &DMatrix<f64> {
        &self.matrix_me
    }

    fn check_len(&self, t: &TdeVector) {
        assert_eq!(
            t.len(),
            self.num_delays(),
            "delay vector length does not match the array"
        );
    }

    /// Delays produced by a source at `s` under direct-path propagation.
    pub fn tde_from_source(&self, s: &Point) -> TdeVector {
        assert_eq!(s.len(), self.dim(), "source dimension does not match the array");
        let d0 = (s - &self.positions[0]).norm();
        TdeVector(
            self.positions[1..]
                .iter()
                .map(|p| ((s - p).norm() - d0) / self.speed_of_sound)
                .collect(),
        )
    }

    /// Membership in the box `ℬ` of physically possible delays, checked on all pairs.
    pub fn in_box(&self, t: &TdeVector) -> bool {
        self.check_len(t);
        let m = self.num_mics();
        (0..m).all(|i| {
            ((i + 1)..m).all(|j| {
                let bound = self.pair_bounds[(i, j)];
                t.pair(i, j).abs() <= bound * (1.0 + 1e-12)
            })
        })
    }

    /// Locus of the sources `S` with `t_{m,n}(S) = t̂`.
    pub fn classify_locus(&self, m: usize, n: usize, t_hat: f64) -> Result<LocusClass> {
        if m == n || m >= self.num_mics() || n >= self.num_mics() {
            return Err(Error::InvalidPair(m, n));
        }
        let bound = self.pair_bounds[(m, n)];
        let tol = LOCUS_TOLERANCE * bound;
        let h = (&self.positions[m] + &self.positions[n]) / 2.0;
        let v = &self.positions[m] - &self.positions[n];
        let class = if t_hat.abs() > bound + tol {
            LocusClass::EmptySet
        } else if (t_hat - bound).abs() <= tol {
            LocusClass::HalfLineMax { h, v }
        } else if (t_hat + bound).abs() <= tol {
            LocusClass::HalfLineMin { h, v }
        } else if t_hat.abs() <= tol {
            LocusClass::Hyperplane { h, v }
        } else {
            LocusClass::HyperboloidSheet {
                h,
                v,
                range_difference: self.speed_of_sound * t_hat,
            }
        };
        Ok(class)
    }

    pub fn build_linear_system(&self, t: &TdeVector) -> LinearSystemParts {
        self.check_len(t);
        let nu = self.speed_of_sound;
        let n = self.num_delays();
        let p = DVector::from_fn(n, |k, _| 2.0 * nu * t[k]);
        let q = DVector::from_fn(n, |k, _| {
            nu * nu * t[k] * t[k] + self.squared_norms[0] - self.squared_norms[k + 1]
        });
        let p_l = p.select_rows(self.local_rows.iter());
        let q_l = q.select_rows(self.local_rows.iter());
        let p_e = p.select_rows(self.extra_rows.iter());
        let q_e = q.select_rows(self.extra_rows.iter());
        let a = -(&self.inv_ml * &p_l);
        let b = -(&self.inv_ml * &q_l);
        LinearSystemParts {
            p,
            q,
            p_l,
            q_l,
            p_e,
            q_e,
            a,
            b,
        }
    }

    /// Coefficients `(‖A‖²−1, ⟨A,B−M_1⟩, ‖B−M_1‖²)` of the quadratic in `w`.
    fn quadratic(&self, sys: &LinearSystemParts) -> (f64, f64, f64) {
        let u = &sys.b - &self.positions[0];
        (sys.a.norm_squared() - 1.0, sys.a.dot(&u), u.norm_squared())
    }

    /// Discriminant `Δ(t) = ⟨A,B−M_1⟩² − ‖B−M_1‖²(‖A‖²−1)`.
    pub fn delta(&self, t: &TdeVector) -> f64 {
        let sys = self.build_linear_system(t);
        let (a2, b, c) = self.quadratic(&sys);
        b * b - c * a2
    }

    /// Both roots of the quadratic in `w` (one when it degenerates to linear),
    /// without any disambiguation. Empty when `Δ < 0`.
    pub fn localization_candidates(&self, t: &TdeVector) -> Vec<Candidate> {
        let sys = self.build_linear_system(t);
        self.candidates_from(&sys, t)
    }

    fn candidates_from(&self, sys: &LinearSystemParts, t: &TdeVector) -> Vec<Candidate> {
        let (a2, b, c) = self.quadratic(sys);
        let mut disc = b * b - c * a2;
        let scale = b * b + (c * a2).abs();
        if disc < 0.0 {
            if disc >= -1e-12 * scale {
                disc = 0.0;
            } else {
                return Vec::new();
            }
        }
        let roots: Vec<f64> = if a2 == 0.0 {
            if b == 0.0 {
                Vec::new()
            } else {
                vec![-c / (2.0 * b)]
            }
        } else {
            // Cancellation-free form: w₁ = q/a2, w₂ = c/q.
            let qq = -(b + b.signum() * disc.sqrt());
            if qq == 0.0 {
                vec![0.0]
            } else {
                vec![qq / a2, c / qq]
            }
        };
        roots
            .into_iter()
            .filter(|w| w.is_finite())
            .map(|w| {
                let position = &sys.a * w + &sys.b;
                let delay_error = self.local_delay_error(&position, t);
                Candidate {
                    w,
                    position,
                    delay_error,
                }
            })
            .collect()
    }

    fn local_delay_error(&self, s: &Point, t: &TdeVector) -> f64 {
        let d0 = (s - &self.positions[0]).norm();
        self.local_rows
            .iter()
            .map(|&k| {
                let tk = ((s - &self.positions[k + 1]).norm() - d0) / self.speed_of_sound;
                (tk - t[k]) * (tk - t[k])
            })
            .sum::<f64>()
            .sqrt()
    }

    fn residual_at(&self, sys: &LinearSystemParts, s: &Point) -> DVector<f64> {
        let w = (s - &self.positions[0]).norm();
        &self.matrix_me * s + &sys.p_e * w + &sys.q_e
    }

    /// Solves the `M_L` subsystem and picks the genuine root.
    fn solve_local(&self, t: &TdeVector) -> Result<(Localization, LinearSystemParts)> {
        self.check_len(t);
        let sys = self.build_linear_system(t);
        let (a2, b, c) = self.quadratic(&sys);
        let delta = b * b - c * a2;
        let scale = b * b + (c * a2).abs();
        if delta < -1e-12 * scale {
            return Err(Error::Infeasible { delta });
        }
        let origin_scale = 1.0 + sys.b.norm();
        if c <= (1e-12 * origin_scale).powi(2) {
            // w = 0: the source sits on the reference microphone.
            let loc = Localization {
                position: sys.b.clone(),
                w: 0.0,
                ambiguous: false,
                alternative: None,
            };
            return Ok((loc, sys));
        }
        if a2 == 0.0 && b == 0.0 {
            return Err(Error::DisambiguationFailure);
        }

        let candidates = self.candidates_from(&sys, t);
        let w_tol = -1e-12 * origin_scale;
        if delta == 0.0 && candidates.len() == 2 {
            // Double root: both candidates coincide.
            let cand = &candidates[0];
            if cand.w >= w_tol {
                let loc = Localization {
                    position: cand.position.clone(),
                    w: cand.w,
                    ambiguous: false,
                    alternative: None,
                };
                return Ok((loc, sys));
            }
            return Err(Error::DisambiguationFailure);
        }

        let tol = self.config.loc_tolerance;
        let mut genuine: Vec<Candidate> = candidates
            .into_iter()
            .filter(|cand| cand.w >= w_tol && cand.delay_error <= tol)
            .collect();
        match genuine.len() {
            0 => Err(Error::DisambiguationFailure),
            1 => {
                let cand = genuine.pop().expect("one candidate");
                let loc = Localization {
                    position: cand.position,
                    w: cand.w,
                    ambiguous: false,
                    alternative: None,
                };
                Ok((loc, sys))
            }
            _ => {
                // Both roots explain the delays. Extra microphones break the tie
                // through the equality residual; otherwise prefer the farther
                // root, the usual situation for an egocentric array.
                let key = |cand: &Candidate| {
                    if self.extra_rows.is_empty() {
                        -cand.w
                    } else {
                        self.residual_at(&sys, &cand.position).norm_squared()
                    }
                };
                genuine.sort_by(|x, y| key(x).total_cmp(&key(y)));
                let mut iter = genuine.into_iter();
                let best = iter.next().expect("two candidates");
                let other = iter.next().expect("two candidates");
                let ambiguous = (&best.position - &other.position).norm() > 1e-9 * origin_scale;
                let loc = Localization {
                    position: best.position,
                    w: best.w,
                    ambiguous,
                    alternative: ambiguous.then_some(other.position),
                };
                Ok((loc, sys))
            }
        }
    }

    /// `ℰ(t) = M_E L(t) + P_E ‖L(t) − M_1‖ + Q_E`, empty when `M = N + 1`.
    pub fn equality_residual(&self, t: &TdeVector) -> Result<DVector<f64>> {
        let (loc, sys) = self.solve_local(t)?;
        Ok(self.residual_at(&sys, &loc.position))
    }

    /// The localization mapping `L(t)`.
    pub fn localize(&self, t: &TdeVector) -> Result<Point> {
        self.localize_detailed(t).map(|loc| loc.position)
    }

    pub fn localize_detailed(&self, t: &TdeVector) -> Result<Localization> {
        let (loc, sys) = self.solve_local(t)?;
        if !self.extra_rows.is_empty() {
            let residual = self.residual_at(&sys, &loc.position).norm_squared();
            if residual > self.config.eq_tolerance {
                return Err(Error::EqualityViolation { residual });
            }
        }
        Ok(loc)
    }

    /// `t ∈ ℬ`, `Δ(t) ≥ 0`, a genuine root exists, and `‖ℰ(t)‖² ≤ eps_eq`.
    pub fn is_feasible(&self, t: &TdeVector, eps_eq: f64) -> bool {
        if t.len() != self.num_delays() || !t.is_finite() || !self.in_box(t) {
            return false;
        }
        if self.delta(t) < 0.0 {
            return false;
        }
        match self.solve_local(t) {
            Ok((loc, sys)) => {
                self.extra_rows.is_empty()
                    || self.residual_at(&sys, &loc.position).norm_squared() <= eps_eq
            }
            Err(_) => false,
        }
    }
}

/// Greedy choice of `N` rows maximizing the smallest singular value of the
/// selected block at every step.
fn select_local_rows(m: &DMatrix<f64>, dim: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..m.nrows() {
            if chosen.contains(&r) {
                continue;
            }
            let rows: Vec<usize> = chosen.iter().copied().chain(std::iter::once(r)).collect();
            let block = m.select_rows(rows.iter());
            let smin = block.svd(false, false).singular_values.min();
            if best.is_none_or(|(_, s)| smin > s) {
                best = Some((r, smin));
            }
        }
        chosen.push(best.expect("enough rows").0);
    }
    chosen
}
