use geotde::bench::{angular_error, summarize, Condition, TrialRecord};
use geotde::correlation::{build_correlations, Frame};
use geotde::simroom::default_array;
use geotde::{Method, Point, TdeVector};
use proptest::prelude::*;

fn source() -> impl Strategy<Value = Point> {
    (0.05f64..3.95, 0.05f64..3.95, 0.05f64..3.95)
        .prop_map(|(x, y, z)| Point::from_vec(vec![x, y, z]))
        .prop_filter("away from the microphones", |s| {
            default_array().positions().iter().all(|m| (s - m).norm() > 0.05)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pairwise_delays_are_antisymmetric_and_bounded(s in source()) {
        let array = default_array();
        let t = array.tde_from_source(&s);
        for m in 0..4 {
            for n in 0..4 {
                prop_assert!((t.pair(m, n) + t.pair(n, m)).abs() < 1e-15);
                prop_assert!((t.pair(m, n) - (t.reference_delay(n) - t.reference_delay(m))).abs() < 1e-15);
                if m != n {
                    prop_assert!(t.pair(m, n).abs() <= array.pair_bound(m, n) * (1.0 + 1e-12));
                }
            }
        }
        prop_assert!(array.in_box(&t));
    }

    #[test]
    fn source_delays_are_feasible_and_one_root_is_the_source(s in source()) {
        let array = default_array();
        let t = array.tde_from_source(&s);
        prop_assert!(array.is_feasible(&t, 1e-12));
        let loc = array.localize_detailed(&t).unwrap();
        let hit = |p: &Point| (p - &s).norm() < 1e-6;
        prop_assert!(hit(&loc.position) || (loc.ambiguous && loc.alternative.as_ref().is_some_and(hit)));
        // Whatever root is returned reproduces the delays.
        prop_assert!(array.tde_from_source(&loc.position).distance(&t) < 1e-12);
    }

    #[test]
    fn delays_outside_the_box_are_infeasible(k in 0usize..3, scale in 1.001f64..3.0) {
        let array = default_array();
        let mut t = TdeVector::zeros(3);
        t.as_mut_slice()[k] = scale * array.reference_bounds()[k];
        prop_assert!(!array.in_box(&t));
        prop_assert!(!array.is_feasible(&t, 1e-12));
    }

    #[test]
    fn angular_error_is_a_symmetric_angle(a in source(), b in source(), r in 0.1f64..10.0) {
        let array = default_array();
        let c = array.centroid();
        prop_assume!((&a - &c).norm() > 1e-3 && (&b - &c).norm() > 1e-3);
        let e = angular_error(&a, &b, &array).unwrap();
        prop_assert!((0.0..=180.0).contains(&e));
        prop_assert!((e - angular_error(&b, &a, &array).unwrap()).abs() < 1e-9);
        let scaled = &c + (&b - &c) * r;
        prop_assert!((e - angular_error(&a, &scaled, &array).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn correlations_and_criterion_stay_in_range(
        seed in any::<u64>(),
        t in prop::collection::vec(-5e-4f64..5e-4, 3),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let channels: Vec<Vec<f64>> =
            (0..4).map(|_| (0..512).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let frame = Frame::new(channels, 16_000.0).unwrap();
        let set = build_correlations(&frame, 1e-3).unwrap();
        let t = TdeVector::new(t);
        for m in 0..4 {
            for n in (m + 1)..4 {
                let rho = set.eval_rho(m, n, t.pair(m, n)).unwrap();
                prop_assert!((-1.0..=1.0).contains(&rho));
            }
        }
        let j = set.criterion_j(&t).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&j));
    }

    #[test]
    fn histogram_accounts_for_every_trial(
        errors in prop::collection::vec(prop::option::of(0.0f64..180.0), 1..60),
        threshold in 1.0f64..180.0,
    ) {
        let trials: Vec<TrialRecord> = errors
            .iter()
            .map(|e| TrialRecord {
                method: Method::Bnb,
                snr_db: 0.0,
                t60: 0.0,
                direction: 0,
                frame: 0,
                azimuth: 0.0,
                elevation: 0.0,
                error_deg: *e,
                feasible: e.is_some(),
                criterion: None,
                failure: None,
                wall_time: 0.0,
            })
            .collect();
        let row = summarize(Method::Bnb, Condition { snr_db: 0.0, t60: 0.0 }, &trials, threshold);
        prop_assert_eq!(row.histogram.iter().sum::<usize>(), trials.len());
        let inliers = errors.iter().flatten().filter(|&&e| e <= threshold).count();
        prop_assert_eq!(row.inliers, inliers);
        prop_assert!((0.0..=100.0).contains(&row.inlier_rate));
    }
}
