use super::*;
use crate::geometry::MicArray;
use crate::testutil::{paper_array as array, shifted_copies, Tones, FS};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn geometric_set(seed: u64) -> (MicArray, CorrelationSet, TdeVector) {
    let array = array();
    let (set, t) = shifted_copies(&array, &DVector::from_vec(vec![0.6, 3.1, 2.6]), seed, 1600);
    (array, set, t)
}

fn random_interior(rng: &mut impl Rng, array: &MicArray) -> TdeVector {
    let bounds = array.reference_bounds();
    TdeVector::new(bounds.iter().map(|b| rng.random_range(-b..*b)).collect())
}

#[test]
fn identical_channels_peak_at_zero() {
    let x: Vec<f64> = Tones::new(1, 20).frame(&[0.0], 800, FS).channel(0).to_vec();
    let frame = Frame::new(vec![x.clone(), x], FS).unwrap();
    let set = build_correlations(&frame, 10.0 / FS).unwrap();
    assert!((set.eval_rho(0, 1, 0.0).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(set.eval_rho(1, 1, 0.0).unwrap(), 1.0);
}

#[test]
fn integer_shift_argmax() {
    let tones = Tones::new(2, 30);
    for d in [-7i32, -3, 0, 4, 9] {
        let frame = tones.frame(&[0.0, d as f64 / FS], 1600, FS);
        let set = build_correlations(&frame, 12.0 / FS).unwrap();
        let f = set.function(0, 1);
        let argmax = (-12..=12)
            .max_by(|a, b| f.sample(*a).total_cmp(&f.sample(*b)))
            .unwrap();
        assert_eq!(argmax, d as isize);
    }
}

#[test]
fn independent_noise_is_uncorrelated() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let channels = (0..2)
            .map(|_| (0..1600).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let frame = Frame::new(channels, FS).unwrap();
        let set = build_correlations(&frame, 30.0 / FS).unwrap();
        worst = set
            .function(0, 1)
            .samples()
            .iter()
            .fold(worst, |w, v| w.max(v.abs()));
    }
    assert!(worst < 0.25, "{worst}");
}

#[test]
fn errors() {
    let frame = Frame::new(vec![vec![1.0; 100], vec![0.5; 100]], FS).unwrap();
    assert!(matches!(
        build_correlations(&frame, 5.0 / FS),
        Err(Error::SilentChannel(0))
    ));
    let tones = Tones::new(4, 5);
    let frame = tones.frame(&[0.0, 0.0], 40, FS);
    assert!(matches!(
        build_correlations(&frame, 30.0 / FS),
        Err(Error::FrameTooShort { .. })
    ));
    let set = build_correlations(&frame, 5.0 / FS).unwrap();
    assert!(matches!(
        set.eval_rho(0, 1, 6.0 / FS),
        Err(Error::LagOutOfRange { .. })
    ));
    assert!(Frame::new(vec![vec![0.0; 10], vec![0.0; 9]], FS).is_err());
    assert!(Frame::new(vec![vec![f64::NAN; 10]], FS).is_err());
}

#[test]
fn integer_lags_are_exact_and_symmetric() {
    let (_, set, _) = geometric_set(5);
    let f = set.function(1, 3);
    for k in -5..=5 {
        let tau = k as f64 / FS;
        assert!((set.eval_rho(1, 3, tau).unwrap() - f.sample(k)).abs() < 1e-12);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let tau = rng.random_range(-set.max_lag()..set.max_lag());
        let a = set.eval_rho(0, 2, tau).unwrap();
        let b = set.eval_rho(2, 0, -tau).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn half_sample_lag_matches_dense_reference() {
    // The same analytic signal sampled 8× faster gives a reference correlation
    // at half-sample lags.
    let tones = Tones::new(7, 25);
    let delays = [0.0, 3.3 / FS];
    let frame = tones.frame(&delays, 1600, FS);
    let set = build_correlations(&frame, 10.0 / FS).unwrap();
    let dense = tones.frame(&delays, 1600 * 8, 8.0 * FS);
    let dense_set = build_correlations(&dense, 80.0 / (8.0 * FS)).unwrap();
    for k in -9..9 {
        let tau = (k as f64 + 0.5) / FS;
        let coarse = set.eval_rho(0, 1, tau).unwrap();
        let reference = dense_set.function(0, 1).sample(8 * k + 4);
        assert!((coarse - reference).abs() < 0.02, "{k}: {coarse} vs {reference}");
    }
}

#[test]
fn identical_channels_give_zero_criterion() {
    let x = Tones::new(8, 20).frame(&[0.0], 800, FS).channel(0).to_vec();
    let frame = Frame::new(vec![x.clone(), x.clone(), x.clone(), x], FS).unwrap();
    let set = build_correlations(&frame, 10.0 / FS).unwrap();
    assert!(set.criterion_j(&TdeVector::zeros(3)).unwrap().abs() < 1e-12);
}

#[test]
fn uncorrelated_channels_give_unit_criterion() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let channels = (0..4)
        .map(|_| (0..16000).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let set = build_correlations(&Frame::new(channels, FS).unwrap(), 10.0 / FS).unwrap();
    let t = TdeVector::zeros(3);
    assert!((set.criterion_j(&t).unwrap() - 1.0).abs() < 0.01);
    let g = set.criterion_gradient(&t).unwrap();
    // White noise makes ρ' large relative to ρ; compare with the scale of ∂R.
    assert!(g.norm() < 0.05 * FS, "{}", g.norm());
}

#[test]
fn true_delays_minimize_the_criterion() {
    let (array, set, t_star) = geometric_set(10);
    let j_star = set.criterion_j(&t_star).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 100 {
        let t = random_interior(&mut rng, &array);
        if t.distance(&t_star) <= 2.0 / FS {
            continue;
        }
        assert!(set.criterion_j(&t).unwrap() > j_star);
        checked += 1;
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let (array, set, _) = geometric_set(12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let h = 1e-7;
    for _ in 0..100 {
        let t = random_interior(&mut rng, &array);
        let g = set.criterion_gradient(&t).unwrap();
        let fd = DVector::from_fn(3, |k, _| {
            let mut p = t.clone();
            let mut m = t.clone();
            p.as_mut_slice()[k] += h;
            m.as_mut_slice()[k] -= h;
            (set.criterion_j(&p).unwrap() - set.criterion_j(&m).unwrap()) / (2.0 * h)
        });
        let err = (&g - &fd).norm() / fd.norm().max(1.0);
        assert!(err < 1e-4, "{err} at {:?}", t.as_slice());
    }
}

#[test]
fn hessian_matches_finite_differences() {
    let (array, set, _) = geometric_set(14);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let h = 1e-7;
    for _ in 0..100 {
        let t = random_interior(&mut rng, &array);
        let hess = set.criterion_hessian(&t).unwrap();
        assert!((&hess - hess.transpose()).norm() <= 1e-12 * hess.norm());
        let mut fd = DMatrix::zeros(3, 3);
        for k in 0..3 {
            let mut p = t.clone();
            let mut m = t.clone();
            p.as_mut_slice()[k] += h;
            m.as_mut_slice()[k] -= h;
            let col = (set.criterion_gradient(&p).unwrap() - set.criterion_gradient(&m).unwrap())
                / (2.0 * h);
            fd.set_column(k, &col);
        }
        let err = (&hess - &fd).norm() / fd.norm().max(1.0);
        assert!(err < 1e-3, "{err}");
    }
}

#[test]
fn hessian_reduces_at_identity() {
    // Two channels: R = I where ρ(τ) = 0, and the Hessian of 1 − ρ² reduces to
    // −tr(∂R ∂R) = −2ρ'².
    let frame = Tones::new(16, 30).frame(&[0.0, 2.4 / FS], 1600, FS);
    let set = build_correlations(&frame, 10.0 / FS).unwrap();
    let rho = |tau: f64| set.eval_rho(0, 1, tau).unwrap();
    let (mut lo, mut hi) = (2.4 / FS, 2.4 / FS);
    while rho(hi) > 0.0 {
        hi += 0.1 / FS;
    }
    while rho(lo) <= 0.0 || lo == hi {
        lo -= 0.05 / FS;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rho(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = TdeVector::new(vec![lo]);
    let (v, d1, _) = set.eval_rho_derivs(0, 1, lo).unwrap();
    assert!(v.abs() < 1e-12);
    let hess = set.criterion_hessian(&t).unwrap();
    let expected = -2.0 * d1 * d1;
    assert!((hess[(0, 0)] - expected).abs() < 1e-9 * expected.abs());
}

#[test]
fn stationary_at_the_noiseless_optimum() {
    // Integer-sample shifts make each sampled ρ symmetric around its peak up to
    // window-edge terms of order 1/len, so a long frame is used.
    let tones = Tones::new(17, 40);
    let delays = [0.0, 3.0 / FS, -2.0 / FS, 5.0 / FS];
    let frame = tones.frame(&delays, 16000, FS);
    let set = build_correlations(&frame, 40.0 / FS).unwrap();
    let t_star = TdeVector::new(delays[1..].to_vec());
    let g0 = set.criterion_gradient(&t_star).unwrap().norm();
    let mut scale = 0.0_f64;
    for k in 0..3 {
        for s in [-1.0, 1.0] {
            let mut t = t_star.clone();
            t.as_mut_slice()[k] += s / FS;
            scale = scale.max(set.criterion_gradient(&t).unwrap().norm());
        }
    }
    assert!(g0 < 1e-3 * scale, "{g0} vs {scale}");
}

#[test]
fn matrix_structure_and_hadamard_bound() {
    let (array, set, _) = geometric_set(18);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..200 {
        let t = random_interior(&mut rng, &array);
        let r = set.correlation_matrix(&t).unwrap();
        assert_eq!(r, r.transpose());
        for i in 0..4 {
            assert_eq!(r[(i, i)], 1.0);
        }
        assert!(r.iter().all(|v| v.abs() <= 1.0));
        assert!(set.criterion_j(&t).unwrap().abs() <= 4f64.powi(2));
    }
    assert_eq!(set.clamp_events(), 0);
}
