use geotde::bench::{angular_error, run_benchmark, BenchmarkConfig, Condition};
use geotde::bnb::BnbConfig;
use geotde::correlation::Frame;
use geotde::pipeline::{run_localize, LocalizeParams};
use geotde::simroom::{default_array, direction_grid, make_test_signal, simulate_frame, RoomSpec, SignalKind};
use geotde::{Error, Method, Point, TdeVector};

const FS: f64 = 16_000.0;

#[test]
fn anechoic_high_snr_bnb_recovers_directions() {
    // The default half-sample cube leaves up to ~7° of quantization error on
    // poorly conditioned directions; a quarter-sample cube resolves them.
    let array = default_array();
    let params = LocalizeParams {
        bnb: BnbConfig { min_side: Some(0.25 / FS), ..BnbConfig::default() },
        ..LocalizeParams::default()
    };
    let grid = direction_grid();
    let mut good = 0;
    for (d, placement) in grid.iter().enumerate() {
        let room = RoomSpec { snr_db: 30.0, rng_seed: d as u64, ..RoomSpec::default() };
        let sim = simulate_frame(&room, &array, placement, SignalKind::SpeechLike).unwrap();
        let r = run_localize(&sim.frame, &array, Method::Bnb, &params).unwrap();
        let err = angular_error(&placement.position(), &r.point().unwrap(), &array).unwrap();
        good += usize::from(err <= 3.0);
    }
    assert!(good as f64 >= 0.95 * grid.len() as f64, "{good}/{}", grid.len());
}

#[test]
fn bnb_on_noise_frames_never_crashes() {
    let array = default_array();
    let params = LocalizeParams::default();
    for seed in 0..100u64 {
        let channels: Vec<Vec<f64>> = (0..4)
            .map(|c| make_test_signal(SignalKind::White, 0.1, FS, seed * 4 + c))
            .collect();
        let frame = Frame::new(channels, FS).unwrap();
        match run_localize(&frame, &array, Method::Bnb, &params) {
            Ok(r) => assert!(r.delays.is_some()),
            Err(Error::NoFeasibleRegion) => {}
            Err(e) => panic!("seed {seed}: {e}"),
        }
    }
}

#[test]
fn pi_is_exact_on_integer_shifts() {
    let array = default_array();
    let source = make_test_signal(SignalKind::White, 0.2, FS, 5);
    let mut checked = 0;
    for placement in direction_grid().iter().step_by(7) {
        let t = array.tde_from_source(&placement.position());
        let shifts: Vec<i64> = t.as_slice().iter().map(|d| (d * FS).round() as i64).collect();
        let target = TdeVector::new(shifts.iter().map(|&k| k as f64 / FS).collect());
        if !array.is_feasible(&target, 1e-12) {
            continue;
        }
        let offset = 40i64;
        let channels: Vec<Vec<f64>> = std::iter::once(0)
            .chain(shifts.iter().copied())
            .map(|k| source[(offset - k) as usize..(offset - k) as usize + 1600].to_vec())
            .collect();
        let frame = Frame::new(channels, FS).unwrap();
        let r = run_localize(&frame, &array, Method::Pi, &LocalizeParams::default()).unwrap();
        let est = r.delays.unwrap();
        assert!(est.distance(&target) < 0.05 / FS, "{est:?} vs {target:?}");
        assert!(r.feasible && r.position.is_some());
        checked += 1;
    }
    assert!(checked >= 10, "{checked}");
}

#[test]
fn threshold_180_counts_every_estimate() {
    let cfg = BenchmarkConfig {
        methods: vec![Method::Pi, Method::Dm, Method::TMult],
        conditions: vec![Condition { snr_db: -10.0, t60: 0.4 }],
        directions: geotde::bench::spread_directions(10),
        frames_per_direction: 1,
        inlier_threshold_deg: 180.0,
        ..BenchmarkConfig::default()
    };
    let report = run_benchmark(&cfg).unwrap();
    for row in &report.rows {
        let with_position = report
            .trials
            .iter()
            .filter(|t| t.method == row.method && t.error_deg.is_some())
            .count();
        assert_eq!(row.inliers, with_position);
        if row.method == Method::TMult {
            assert_eq!(row.inlier_rate, 100.0);
        }
    }
}

#[test]
fn multilateration_returns_positions_without_feasibility() {
    let cfg = BenchmarkConfig {
        methods: vec![Method::TMult],
        conditions: vec![Condition { snr_db: -10.0, t60: 0.6 }],
        directions: geotde::bench::spread_directions(10),
        frames_per_direction: 1,
        ..BenchmarkConfig::default()
    };
    let report = run_benchmark(&cfg).unwrap();
    assert!(report.trials.iter().all(|t| t.error_deg.is_some()));
    assert!(report.trials.iter().any(|t| !t.feasible));
}

#[test]
fn multilateration_radius_sensitivity_is_small() {
    let cfg = BenchmarkConfig {
        methods: vec![Method::NMult, Method::TMult, Method::FMult],
        ..BenchmarkConfig::default()
    };
    let report = run_benchmark(&cfg).unwrap();
    let rates: Vec<f64> = report.rows.iter().map(|r| r.inlier_rate).collect();
    let spread = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - rates.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread <= 5.0, "{rates:?}");
}

#[test]
fn simulated_ground_truth_is_consistent() {
    let array = default_array();
    for placement in direction_grid().iter().step_by(11) {
        let room = RoomSpec { t60: 0.2, snr_db: 0.0, rng_seed: 3, ..RoomSpec::default() };
        let sim = simulate_frame(&room, &array, placement, SignalKind::SpeechLike).unwrap();
        assert_eq!(sim.frame.num_channels(), 4);
        assert_eq!(sim.frame.len(), 1600);
        let s: Point = placement.position();
        assert!(sim.delays.distance(&array.tde_from_source(&s)) == 0.0);
    }
}
