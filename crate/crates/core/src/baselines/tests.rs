use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::bnb::sample_box;
use crate::correlation::{build_correlations, default_max_lag, Frame};
use crate::geometry::{MicArray, TdeVector};
use crate::result::Method;
use crate::testutil::{paper_array, point, shifted_copies, Tones, FS};

fn fd_gradient(f: impl Fn(&TdeVector) -> f64, t: &TdeVector, h: f64) -> DVector<f64> {
    DVector::from_fn(t.len(), |k, _| {
        let mut p = t.clone();
        let mut m = t.clone();
        p.as_mut_slice()[k] += h;
        m.as_mut_slice()[k] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

fn five_mic_array() -> MicArray {
    MicArray::from_coords(
        &[
            vec![2.0, 2.1, 1.83],
            vec![1.8, 2.1, 1.83],
            vec![1.9, 2.2, 1.97],
            vec![1.9, 2.0, 1.97],
            vec![1.95, 2.05, 1.7],
        ],
        343.0,
    )
    .unwrap()
}

#[test]
fn delta_gradient_matches_finite_differences() {
    for array in [paper_array(), five_mic_array()] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = sample_box(&array, &mut rng);
            let g = delta_gradient(&array, &t);
            let fd = fd_gradient(|x| array.delta(x), &t, 1e-8);
            let err = (&g - &fd).norm() / fd.norm().max(1e-300);
            assert!(err < 1e-4, "{err}");
        }
    }
}

#[test]
fn delta_hessian_matches_finite_differences() {
    for array in [paper_array(), five_mic_array()] {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = array.num_delays();
        for _ in 0..100 {
            let t = sample_box(&array, &mut rng);
            let h = delta_hessian(&array, &t);
            assert!((&h - h.transpose()).norm() <= 1e-12 * h.norm());
            let mut fd = DMatrix::zeros(n, n);
            let step = 1e-8;
            for k in 0..n {
                let mut p = t.clone();
                let mut m = t.clone();
                p.as_mut_slice()[k] += step;
                m.as_mut_slice()[k] -= step;
                let col = (delta_gradient(&array, &p) - delta_gradient(&array, &m)) / (2.0 * step);
                fd.set_column(k, &col);
            }
            let err = (&h - &fd).norm() / fd.norm();
            assert!(err < 1e-4, "{err}");
        }
    }
}

#[test]
fn delta_derivatives_at_zero_delay() {
    // With t = 0: A = 0 and ∂B/∂t = 0, so ∇Δ = 0 and
    // HΔ = 2 J_Aᵀu uᵀJ_A − 2ν² diag(M_L⁻ᵀu)·2 − 2‖u‖² J_AᵀJ_A.
    let array = paper_array();
    let t = TdeVector::zeros(3);
    assert!(delta_gradient(&array, &t).norm() == 0.0);
    let nu = array.speed_of_sound();
    let sys = array.build_linear_system(&t);
    let u = &sys.b - &array.positions()[0];
    let ja = array.inv_ml() * (-2.0 * nu);
    let jau = ja.tr_mul(&u);
    let e = DMatrix::from_diagonal(&(array.inv_ml().transpose() * &u * (-2.0 * nu * nu)));
    let expected_local =
        &jau * jau.transpose() * 2.0 + e * 2.0 - ja.tr_mul(&ja) * (2.0 * u.norm_squared());
    let h = delta_hessian(&array, &t);
    for (i, &ki) in array.local_rows().iter().enumerate() {
        for (j, &kj) in array.local_rows().iter().enumerate() {
            let want = expected_local[(i, j)];
            assert!((h[(ki, kj)] - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }
}

#[test]
fn grid_sizes() {
    let array = paper_array();
    let (set, _) = shifted_copies(&array, &point(3.0, 1.0, 2.5), 1, 1600);
    let cfg = GridConfig::default();
    let dense = make_grid(GridKind::DenseFeasible, &set, &array, &cfg).unwrap();
    let unc = make_grid(GridKind::Unconstrained, &set, &array, &cfg).unwrap();
    let sparse = make_grid(GridKind::Sparse, &set, &array, &cfg).unwrap();
    assert_eq!(sparse.points.len(), 27);
    assert!(dense.points.iter().all(|t| array.is_feasible(t, 1e-12)));
    assert!(unc.points.iter().all(|t| array.in_box(t)));
    let within = |n: usize, target: f64| (n as f64 - target).abs() <= 0.15 * target;
    assert!(within(dense.points.len(), 352.0), "{}", dense.points.len());
    assert!(within(unc.points.len(), 456.0), "{}", unc.points.len());
}

#[test]
fn empty_grid_and_bad_config() {
    let array = paper_array();
    let (set, _) = shifted_copies(&array, &point(3.0, 1.0, 2.5), 1, 1600);
    let cfg = GridConfig {
        step_fraction: 0.0,
        ..GridConfig::default()
    };
    assert!(make_grid(GridKind::Unconstrained, &set, &array, &cfg).is_err());
    let empty = InitGrid {
        kind: GridKind::DenseFeasible,
        points: vec![],
    };
    assert!(matches!(solve_dm(&set, &array, &empty, 1e-12), Err(crate::Error::EmptyGrid)));
    assert!(matches!(
        solve_multistart(&set, &array, &empty, &LbConfig::default(), Method::DLb),
        Err(crate::Error::EmptyGrid)
    ));
    let bad = LbConfig {
        mu_decay: 1.5,
        ..LbConfig::default()
    };
    assert!(solve_logbarrier(&set, &array, &TdeVector::zeros(3), &bad).is_err());
}

#[test]
fn logbarrier_fixed_point_and_descent() {
    let array = paper_array();
    let (set, t_star) = shifted_copies(&array, &point(3.3, 2.6, 2.4), 3, 1600);
    // Minimizer of J near t⋆ found by an unconstrained run from t⋆ itself.
    let unc = solve_logbarrier(&set, &array, &t_star, &LbConfig::unconstrained()).unwrap();
    assert!(unc.delays.distance(&t_star) < 0.1 / FS);
    let again = solve_logbarrier(&set, &array, &unc.delays, &LbConfig::default()).unwrap();
    assert!(again.delays.distance(&unc.delays) < 0.01 / FS);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut runs = 0;
    while runs < 30 {
        let init = sample_box(&array, &mut rng);
        if !(array.delta(&init) > 0.0) || !array.is_feasible(&init, 1e-12) {
            continue;
        }
        runs += 1;
        let out = solve_logbarrier(&set, &array, &init, &LbConfig::default()).unwrap();
        assert!(out.path.iter().all(|p| array.delta(p) > 0.0));
        assert!(out.criterion <= set.criterion_j(&init).unwrap());
        assert!(array.is_feasible(&out.delays, 1e-12));
    }
}

#[test]
fn constrained_start_must_be_interior() {
    let array = paper_array();
    let (set, _) = shifted_copies(&array, &point(3.3, 2.6, 2.4), 3, 1600);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bad = loop {
        let t = sample_box(&array, &mut rng);
        if array.delta(&t) < 0.0 {
            break t;
        }
    };
    assert!(matches!(
        solve_logbarrier(&set, &array, &bad, &LbConfig::default()),
        Err(crate::Error::InitInfeasible)
    ));
}

#[test]
fn multistart_refines_the_grid() {
    let array = paper_array();
    let (set, t_star) = shifted_copies(&array, &point(0.9, 3.2, 1.4), 6, 1600);
    let cfg = GridConfig::default();
    let dense = make_grid(GridKind::DenseFeasible, &set, &array, &cfg).unwrap();
    let sparse = make_grid(GridKind::Sparse, &set, &array, &cfg).unwrap();
    let dm = solve_dm(&set, &array, &dense, 1e-12).unwrap();
    let dlb = solve_multistart(&set, &array, &dense, &LbConfig::default(), Method::DLb).unwrap();
    let slb = solve_multistart(&set, &array, &sparse, &LbConfig::default(), Method::SLb).unwrap();
    let grid_min = dense
        .points
        .iter()
        .map(|t| set.criterion_j(t).unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(dm.criterion.unwrap(), grid_min);
    assert!(dlb.criterion.unwrap() <= grid_min);
    // The sparse grid holds the integer-rounded true delays, so both runs end
    // in the global basin.
    let d = dlb.delays.as_ref().unwrap();
    assert!(d.distance(&t_star) < 0.5 / FS, "{:?} vs {:?}", d, t_star);
    assert!(d.distance(slb.delays.as_ref().unwrap()) < 0.01 / FS);
    assert_eq!(solve_dm(&set, &array, &dense, 1e-12).unwrap().delays, dm.delays);
}

#[test]
fn pairwise_recovers_integer_shifts() {
    let array = paper_array();
    let tones = Tones::new(7, 40);
    let delays = [0.0, 4.0 / FS, -6.0 / FS, 2.0 / FS];
    let frame = tones.frame(&delays, 1600, FS);
    let set = build_correlations(&frame, default_max_lag(&array, FS)).unwrap();
    let t = estimate_pairwise_delays(&set, &array);
    for k in 0..3 {
        let want = delays[k + 1] * FS;
        assert_eq!((t[k] * FS).round(), want);
        assert!((t[k] * FS - want).abs() < 0.25);
    }

    // Fractional shifts: within a quarter sample.
    let (set, t_star) = shifted_copies(&array, &point(3.1, 0.7, 2.2), 8, 1600);
    let t = estimate_pairwise_delays(&set, &array);
    for k in 0..3 {
        assert!((t[k] - t_star[k]).abs() < 0.25 / FS);
    }
}

#[test]
fn pairwise_on_noise_stays_in_range() {
    let array = paper_array();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let channels = (0..4)
        .map(|_| (0..1600).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let frame = Frame::new(channels, FS).unwrap();
    let set = build_correlations(&frame, default_max_lag(&array, FS)).unwrap();
    let t = estimate_pairwise_delays(&set, &array);
    let bounds = array.reference_bounds();
    for k in 0..3 {
        assert!(t[k].abs() <= bounds[k]);
    }
}

#[test]
fn mult_cost_vanishes_on_consistent_delays() {
    let array = paper_array();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let s = point(
            rng.random_range(0.0..4.0),
            rng.random_range(0.0..4.0),
            rng.random_range(0.0..4.0),
        );
        let t = array.tde_from_source(&s);
        let scale = default_lambda(&array, 1.7) * 1.7f64.powi(4) * 10.0;
        assert!(mult_cost(&s, &t, &array) <= 1e-9 * scale);
        let other = point(rng.random_range(0.0..4.0), 1.0, 1.0);
        assert!(mult_cost(&other, &t, &array) >= 0.0);
    }
}

#[test]
fn mult_derivatives_match_finite_differences() {
    let array = paper_array();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let t = sample_box(&array, &mut rng);
        let s = point(
            rng.random_range(0.0..4.0),
            rng.random_range(0.0..4.0),
            rng.random_range(0.0..4.0),
        );
        let h = 1e-6;
        let fd = DVector::from_fn(3, |k, _| {
            let mut p = s.clone();
            let mut m = s.clone();
            p[k] += h;
            m[k] -= h;
            (mult_cost(&p, &t, &array) - mult_cost(&m, &t, &array)) / (2.0 * h)
        });
        let g = mult_gradient(&s, &t, &array);
        assert!((&g - &fd).norm() / fd.norm() < 1e-4);
        let mut fdh = DMatrix::zeros(3, 3);
        for k in 0..3 {
            let mut p = s.clone();
            let mut m = s.clone();
            p[k] += h;
            m[k] -= h;
            fdh.set_column(k, &((mult_gradient(&p, &t, &array) - mult_gradient(&m, &t, &array)) / (2.0 * h)));
        }
        let hess = mult_hessian(&s, &t, &array);
        assert!((&hess - &fdh).norm() / fdh.norm() < 1e-3);
    }
}

#[test]
fn multilateration_recovers_consistent_source() {
    let array = paper_array();
    let unregularized = MultConfig {
        lambda: Some(0.0),
        ..MultConfig::typical()
    };
    let centroid = array.centroid();
    for dir in fibonacci_sphere(12) {
        let s = &centroid + dir * 1.7;
        let t = array.tde_from_source(&s);
        // Squaring each range equation makes H invariant under t → −t, so with
        // λ = 0 the mirror source explaining −t is an equally good zero.
        let (est, cost) = multilaterate(&t, &array, &unregularized).unwrap();
        let te = array.tde_from_source(&est);
        assert!(te.distance(&t) < 1e-9 || te.distance(&t.negated()) < 1e-9);
        assert!(cost < 1e-20);
        // The radius prior at the true range singles out the source.
        let (est, _) = multilaterate(&t, &array, &MultConfig::typical()).unwrap();
        assert!((&est - &s).norm() < 1e-4, "{:?} vs {:?}", est, s);
    }
}

#[test]
fn fibonacci_directions_are_unit_and_spread() {
    let dirs = fibonacci_sphere(200);
    assert_eq!(dirs.len(), 200);
    assert!(dirs.iter().all(|d| (d.norm() - 1.0).abs() < 1e-12));
    let mean = dirs.iter().fold(DVector::zeros(3), |a, d| a + d) / 200.0;
    assert!(mean.norm() < 0.01);
}
