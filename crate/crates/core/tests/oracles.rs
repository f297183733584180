//! Monte Carlo and calibration oracles against closed forms.

use std::f64::consts::PI;

use orbm::analytics::{self, hit_prob, StripInterval};
use orbm::conformal::{transport, MapSpec, Target};
use orbm::drivers::brownian_driver;
use orbm::params::WedgeAngles;
use orbm::reflect::{oscillation_ratio, solve_path, ReflectionSpec, FACE_TOL};
use orbm::sim::{
    monte_carlo, run, simulate, DriftSpec, DriverInput, ExcursionTracker, LevelRule, McConfig,
    Observable, StopReason, StopRules,
};
use orbm::Vec2;

fn angles() -> WedgeAngles {
    WedgeAngles::new(PI / 3.0, -PI / 6.0).unwrap()
}

#[test]
fn driver_endpoint_has_mean_zero() {
    let cfg = McConfig::new(10_000, 3);
    for coord in 0..2 {
        let r = monte_carlo(&cfg, |_, seed| {
            let v = *brownian_driver(seed, 1.0, 1e-2)?.values().last().unwrap();
            Ok(Some(if coord == 0 { v.x } else { v.y }))
        })
        .unwrap();
        assert!(r.estimate.abs() <= 4.0 * r.std_error, "{r:?}");
        assert!((r.std_error - 0.01).abs() < 1e-3);
    }
}

#[test]
fn identical_configs_give_identical_reports() {
    let cfg = McConfig::new(200, 11);
    let f = |_, seed| Ok(Some(brownian_driver(seed, 0.1, 1e-2)?.values().last().unwrap().norm()));
    assert_eq!(monte_carlo(&cfg, f).unwrap(), monte_carlo(&cfg, f).unwrap());
}

#[test]
fn strip_hitting_probability_matches_scale_function() {
    let a = angles();
    let spec = ReflectionSpec::strip(&a).unwrap();
    let iv = StripInterval::new(&a).unwrap();
    let y0 = iv.a + 0.3 * (iv.b - iv.a);
    let stop = StopRules {
        horizon: 100.0,
        level: Some(LevelRule {
            observable: Observable::Vertical,
            lower: Some(iv.a + 0.05),
            upper: Some(iv.b - 0.05),
            bridge: true,
        }),
        origin_guard: false,
    };
    let inner = StripInterval::from_bounds(iv.a + 0.05, iv.b - 0.05).unwrap();
    let r = monte_carlo(&McConfig::new(4000, 5), |_, seed| {
        let s = run(Vec2::new(0.0, y0), &spec, &DriftSpec::StripConditioned, DriverInput::Seeded { seed, dt: 1e-4 }, &stop, ())?;
        Ok(match s.stop_reason {
            StopReason::LevelUpper => Some(1.0),
            StopReason::LevelLower => Some(0.0),
            _ => None,
        })
    })
    .unwrap();
    let target = hit_prob(y0, &inner).unwrap();
    assert!((r.estimate - target).abs() <= 4.0 * r.std_error, "{} vs {target} (se {})", r.estimate, r.std_error);
}

#[test]
fn conditioned_strip_paths_stay_in_the_strip() {
    let a = angles();
    let spec = ReflectionSpec::strip(&a).unwrap();
    let iv = StripInterval::new(&a).unwrap();
    for seed in 0..5 {
        let t = simulate(
            Vec2::new(0.0, 0.5 * (iv.a + iv.b)),
            &spec,
            &DriftSpec::StripConditioned,
            DriverInput::Seeded { seed, dt: 1e-3 },
            &StopRules::horizon(20.0),
        )
        .unwrap();
        assert!(t.path.states.iter().all(|z| z.y >= iv.a && z.y <= iv.b));
        assert!(t.path.l_lower.last().unwrap() > &0.0 && t.path.l_upper.last().unwrap() > &0.0);
    }
}

#[test]
fn lower_leg_local_time_matches_exit_law() {
    let a = angles();
    let spec = ReflectionSpec::strip(&a).unwrap();
    let iv = StripInterval::new(&a).unwrap();
    let x0 = Vec2::new(0.0, iv.a);
    let r = monte_carlo(&McConfig::new(8, 21), |_, seed| {
        let mut tr = ExcursionTracker::new(spec, FACE_TOL).with_max_cycles(300);
        tr.start(x0);
        run(x0, &spec, &DriftSpec::StripConditioned, DriverInput::Seeded { seed, dt: 2.5e-5 }, &StopRules::horizon(1e3), &mut tr)?;
        let l = &tr.stats().lower_leg_local_times;
        Ok(Some(l.iter().sum::<f64>() / l.len() as f64))
    })
    .unwrap();
    let target = 1.0 / analytics::exit_law_up(&a).unwrap();
    assert!((r.estimate / target - 1.0).abs() < 0.05, "{} vs {target}", r.estimate);
}

#[test]
fn wedge_image_has_brownian_quadratic_variation() {
    let a = angles();
    let map = MapSpec::new(&a).unwrap();
    let spec = ReflectionSpec::quadrant_from_angles(&a).unwrap();
    let (mut qv, mut elapsed) = (0.0, 0.0);
    for seed in 0..20 {
        let t = simulate(
            Vec2::new(1.0, 1.0),
            &spec,
            &DriftSpec::None,
            DriverInput::Seeded { seed, dt: 1e-5 },
            &StopRules::horizon(0.2),
        )
        .unwrap();
        let w = transport(&t.path, &map, Target::Wedge, 1e-2).unwrap();
        let (ts, xs) = w.resample(1e-3).unwrap();
        qv += xs.windows(2).map(|p| (p[1].y - p[0].y).powi(2)).sum::<f64>();
        elapsed += ts.last().unwrap() - ts[0];
    }
    assert!((qv / elapsed - 1.0).abs() < 0.05, "qv {qv} over clock {elapsed}");
}

/// Oscillation ratios of random drivers stay under a constant calibrated on
/// a separate batch.
#[test]
fn oscillation_ratio_calibration() {
    for (a1, a2) in [(0.5, 0.3), (2.0, -1.5), (-0.7, -0.9)] {
        let spec = ReflectionSpec::quadrant(a1, a2).unwrap();
        let ratio = |seed: u64| {
            let d = brownian_driver(seed, 0.3, 1e-3).unwrap();
            let p = solve_path(&d, Vec2::new(0.01, 0.01), &spec).unwrap();
            oscillation_ratio(&d, &p).unwrap()
        };
        let calibrated = 1.1 * (0..1000).map(ratio).fold(0.0, f64::max);
        assert!(calibrated.is_finite() && calibrated >= 1.0);
        let exceed = (10_000..10_200).filter(|&s| ratio(s) > calibrated).count();
        assert!(exceed <= 2, "({a1}, {a2}): {exceed} of 200 above {calibrated}");
    }
}
