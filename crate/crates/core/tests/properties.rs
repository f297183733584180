use std::f64::consts::{FRAC_PI_2, PI};

use orbm::analytics::{hit_prob, StripInterval};
use orbm::conformal::MapSpec;
use orbm::drivers::{brownian_driver, DrivingPath};
use orbm::params::{classify, derive, RegimeLabel, WedgeAngles};
use orbm::reflect::{lcp_candidates, one_step_reflect, solve_path, Face, ReflectionSpec};
use orbm::Vec2;
use proptest::prelude::*;

fn p_matrix_spec() -> impl Strategy<Value = ReflectionSpec> {
    (-4.0f64..4.0, -4.0f64..4.0)
        .prop_filter("P-matrix", |(a1, a2)| a1 * a2 < 0.95)
        .prop_map(|(a1, a2)| ReflectionSpec::quadrant(a1, a2).unwrap())
}

fn state() -> impl Strategy<Value = Vec2> {
    prop_oneof![
        (0.0f64..2.0, 0.0f64..2.0).prop_map(|(x, y)| Vec2::new(x, y)),
        (0.0f64..2.0).prop_map(|x| Vec2::new(x, 0.0)),
        (0.0f64..2.0).prop_map(|y| Vec2::new(0.0, y)),
        Just(Vec2::ZERO),
    ]
}

fn positive_opening() -> impl Strategy<Value = (f64, f64)> {
    (-1.5f64..1.5, 0.01f64..3.0)
        .prop_map(|(t1, opening)| (t1, opening - t1))
        .prop_filter("admissible", |(_, t2)| t2.abs() < 1.5)
}

fn admissible() -> impl Strategy<Value = (f64, f64)> {
    (-1.5f64..1.5, -1.5f64..1.5).prop_filter("non-degenerate", |(t1, t2)| {
        (t1 + t2).abs() > 1e-3 && (t1.tan() + t2.tan()).abs() > 1e-3
    })
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 2000,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn one_step_is_a_complementary_solution(spec in p_matrix_spec(), z in state(), dx in -1.0f64..1.0, dy in -1.0f64..1.0) {
        let d = Vec2::new(dx, dy);
        let s = one_step_reflect(z, d, &spec).unwrap();
        prop_assert!(s.dm_lower >= 0.0 && s.dm_upper >= 0.0);
        prop_assert!(spec.contains(s.post_state, 1e-12));
        let rebuilt = z + d + s.dm_lower * spec.v_lower + s.dm_upper * spec.v_upper;
        prop_assert!((rebuilt - s.post_state).norm() <= 1e-10 * (1.0 + rebuilt.norm()));
        prop_assert!(s.dm_lower * spec.face_distance(Face::Lower, s.post_state).abs() <= 1e-10);
        prop_assert!(s.dm_upper * spec.face_distance(Face::Upper, s.post_state).abs() <= 1e-10);
        let feasible = lcp_candidates(z, d, &spec).iter().filter(|c| c.is_feasible(1e-10)).count();
        prop_assert_eq!(feasible, 1);
    }

    #[test]
    fn interior_steps_move_in_tandem(spec in p_matrix_spec(), x in 0.5f64..2.0, y in 0.5f64..2.0, dx in -0.4f64..0.4, dy in -0.4f64..0.4) {
        let z = Vec2::new(x, y);
        let d = Vec2::new(dx, dy);
        let s = one_step_reflect(z, d, &spec).unwrap();
        prop_assert_eq!(s.dm_lower, 0.0);
        prop_assert_eq!(s.dm_upper, 0.0);
        prop_assert_eq!(s.post_state, z + d);
    }

    #[test]
    fn power_of_two_scaling_is_exact(spec in p_matrix_spec(), seed in 0u64..1000, e in -3i32..4) {
        let c = 2f64.powi(e);
        let driver = brownian_driver(seed, 0.1, 1e-3).unwrap();
        let x0 = Vec2::new(0.05, 0.02);
        let base = solve_path(&driver, x0, &spec).unwrap();
        let times: Vec<f64> = driver.times().iter().map(|t| t * c * c).collect();
        let values: Vec<Vec2> = driver.values().iter().map(|v| *v * c).collect();
        let scaled_driver = DrivingPath::from_times_values(times, values, None).unwrap();
        let scaled = solve_path(&scaled_driver, x0 * c, &spec).unwrap();
        for k in 0..base.len() {
            prop_assert_eq!(scaled.states[k], base.states[k] * c);
            prop_assert_eq!(scaled.l_lower[k], base.l_lower[k] * c);
            prop_assert_eq!(scaled.l_upper[k], base.l_upper[k] * c);
        }
    }

    #[test]
    fn local_times_grow_and_paths_stay_inside(spec in p_matrix_spec(), seed in 0u64..10_000) {
        let p = solve_path(&brownian_driver(seed, 0.2, 1e-3).unwrap(), Vec2::new(0.01, 0.01), &spec).unwrap();
        prop_assert!(p.states.iter().all(|z| spec.contains(*z, 1e-12)));
        prop_assert!(p.l_lower.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(p.l_upper.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn nonnegative_slopes_and_acute_opening_contract((t1, t2) in (0.0f64..1.5, 0.0f64..1.5)) {
        prop_assume!(t1 + t2 > 1e-3);
        let p = derive(WedgeAngles::new(t1, t2).unwrap()).unwrap();
        if p.alpha < 1.0 {
            prop_assert!(p.beta < 1.0);
        }
    }

    #[test]
    fn symmetric_labels_survive_swapping((t1, t2) in admissible()) {
        let a = WedgeAngles::new(t1, t2).unwrap();
        let l = classify(&derive(a).unwrap());
        let s = classify(&derive(a.swapped()).unwrap());
        if matches!(l, RegimeLabel::PathwiseUnique | RegimeLabel::NotSemimartingale) {
            prop_assert_eq!(l, s);
        }
    }

    #[test]
    fn wedge_and_strip_maps_invert((t1, t2) in positive_opening(), r in 0.01f64..10.0, th in 0.0f64..FRAC_PI_2) {
        let map = MapSpec::new(&WedgeAngles::new(t1, t2).unwrap()).unwrap();
        let z = Vec2::from_polar(r, th);
        let back = map.from_wedge(map.to_wedge(z));
        prop_assert!((back - z).norm() <= 1e-9 * (1.0 + r));
        let back = map.from_strip(map.to_strip(z).unwrap());
        prop_assert!((back - z).norm() <= 1e-9 * (1.0 + r));
    }

    #[test]
    fn hit_prob_is_a_monotone_probability((t1, t2) in positive_opening(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let iv = StripInterval::new(&WedgeAngles::new(t1, t2).unwrap()).unwrap();
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        let x = |s: f64| iv.a + s * (iv.b - iv.a);
        let (p, q) = (hit_prob(x(lo), &iv).unwrap(), hit_prob(x(hi), &iv).unwrap());
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
        prop_assert!(p <= q + 1e-12);
    }
}

#[test]
fn boundary_examples_of_hit_prob() {
    let iv = StripInterval::new(&WedgeAngles::new(PI / 3.0, -PI / 6.0).unwrap()).unwrap();
    assert!(hit_prob(iv.a, &iv).unwrap().abs() < 1e-15);
    assert!((hit_prob(iv.b, &iv).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn seeded_drivers_are_byte_identical() {
    let mut a = Vec::new();
    let mut b = Vec::new();
    brownian_driver(42, 0.5, 1e-3).unwrap().write_csv(&mut a, &[]).unwrap();
    brownian_driver(42, 0.5, 1e-3).unwrap().write_csv(&mut b, &[]).unwrap();
    assert_eq!(a, b);
    let mut c = Vec::new();
    brownian_driver(43, 0.5, 1e-3).unwrap().write_csv(&mut c, &[]).unwrap();
    assert_ne!(a, c);
}
