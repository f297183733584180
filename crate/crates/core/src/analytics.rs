//! Closed forms for the strip's vertical diffusion `dY = cot(Y) dt + dW`
//! on `[a, b] = [π/2 - θ1, π/2 + θ2]`, reflected at the ends.
//!
//! Scale function `S(x) = -cot x`, speed density `m(x) = sin² x`
//! (normalized so that `S'(x) m(x) = 1`).

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::params::{derive, DerivedParams, WedgeAngles};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripInterval {
    pub a: f64,
    pub b: f64,
}

impl StripInterval {
    /// `[π/2 - θ1, π/2 + θ2]`; needs `θ1 + θ2 > 0`.
    pub fn new(angles: &WedgeAngles) -> Result<Self> {
        check_opening(angles)?;
        Self::from_bounds(FRAC_PI_2 - angles.theta1, FRAC_PI_2 + angles.theta2)
    }

    pub fn from_bounds(a: f64, b: f64) -> Result<Self> {
        if !(0.0 < a && a < b && b < PI) {
            return Err(Error::Invalid(format!(
                "strip interval needs 0 < a < b < pi, got [{a}, {b}]"
            )));
        }
        Ok(StripInterval { a, b })
    }
}

fn check_opening(angles: &WedgeAngles) -> Result<()> {
    if angles.theta1 + angles.theta2 > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateAngles {
            theta1: angles.theta1,
            theta2: angles.theta2,
            reason: "the strip needs theta1 + theta2 > 0",
        })
    }
}

fn check_open_unit(x: f64) -> Result<()> {
    if x > 0.0 && x < PI {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "x",
            value: x,
            domain: "(0, pi)",
        })
    }
}

/// `S(x) = -cot x`.
pub fn scale_function(x: f64) -> Result<f64> {
    check_open_unit(x)?;
    Ok(-x.cos() / x.sin())
}

/// `S'(x) = 1 / sin² x`.
pub fn scale_derivative(x: f64) -> Result<f64> {
    check_open_unit(x)?;
    Ok(1.0 / x.sin().powi(2))
}

/// `m(x) = sin² x`.
pub fn speed_density(x: f64) -> f64 {
    x.sin().powi(2)
}

/// `P(hit b before a | start x) = (S(x) - S(a)) / (S(b) - S(a))`, evaluated as
/// `sin(x - a) sin b / (sin(b - a) sin x)` to avoid cancellation near `a`.
pub fn hit_prob(x: f64, interval: &StripInterval) -> Result<f64> {
    let StripInterval { a, b } = *interval;
    if !(a <= x && x <= b) {
        return Err(Error::Domain {
            what: "x",
            value: x,
            domain: "[a, b]",
        });
    }
    Ok(((x - a).sin() * b.sin() / ((b - a).sin() * x.sin())).clamp(0.0, 1.0))
}

/// Rate of upward exits from the lower face: `1 / (cos²θ1 (tan θ1 + tan θ2))`.
pub fn exit_law_up(angles: &WedgeAngles) -> Result<f64> {
    check_opening(angles)?;
    Ok(1.0 / (angles.theta1.cos().powi(2) * (angles.a1() + angles.a2())))
}

/// Mirror of [`exit_law_up`]: `1 / (cos²θ2 (tan θ1 + tan θ2))`.
pub fn exit_law_down(angles: &WedgeAngles) -> Result<f64> {
    exit_law_up(&angles.swapped())
}

/// Limit form `lim p(a + δ)/δ = 1 / (sin² a (cot a - cot b))`.
pub fn exit_law_up_limit_form(interval: &StripInterval) -> f64 {
    let StripInterval { a, b } = *interval;
    1.0 / (a.sin().powi(2) * (a.cos() / a.sin() - b.cos() / b.sin()))
}

/// One-sided quotient `p(a + δ) / δ`, the quantity estimated by simulation.
pub fn exit_law_up_quotient(interval: &StripInterval, delta: f64) -> Result<f64> {
    Ok(hit_prob(interval.a + delta, interval)? / delta)
}

/// Central quotient `(p(a + δ) - p(a - δ)) / 2δ` with `p` continued past `a`:
/// `sin 2δ / (2δ sin(a - δ) sin(a + δ) (cot a - cot b))`, accurate to `O(δ²)`.
pub fn exit_law_up_central(interval: &StripInterval, delta: f64) -> f64 {
    let StripInterval { a, b } = *interval;
    let span = a.cos() / a.sin() - b.cos() / b.sin();
    (2.0 * delta).sin() / (2.0 * delta * (a - delta).sin() * (a + delta).sin() * span)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitTimes {
    /// Expected time from the lower face to the upper face.
    pub down_to_up: f64,
    /// Expected time from the upper face to the lower face.
    pub up_to_down: f64,
    pub cycle: f64,
}

/// Closed forms:
/// `E_du = (θ1+θ2) tan θ2 + sin²θ1 + sin θ1 cos θ1 tan θ2`,
/// `E_ud = (θ1+θ2) tan θ1 + sin²θ2 + tan θ1 sin θ2 cos θ2`.
pub fn expected_exit_time_legs(angles: &WedgeAngles) -> Result<ExitTimes> {
    check_opening(angles)?;
    let (t1, t2) = (angles.theta1, angles.theta2);
    let (a1, a2) = (angles.a1(), angles.a2());
    let s = t1 + t2;
    let down_to_up = s * a2 + t1.sin().powi(2) + t1.sin() * t1.cos() * a2;
    let up_to_down = s * a1 + t2.sin().powi(2) + a1 * t2.sin() * t2.cos();
    Ok(ExitTimes {
        down_to_up,
        up_to_down,
        cycle: down_to_up + up_to_down,
    })
}

/// The same expectations from the integrals
/// `E_du = 2 ∫_a^b (S(b) - S(y)) m(y) dy`, `E_ud = 2 ∫_a^b (S(y) - S(a)) m(y) dy`.
pub fn expected_exit_time_quadrature(angles: &WedgeAngles, tol: f64) -> Result<ExitTimes> {
    let StripInterval { a, b } = StripInterval::new(angles)?;
    let s = |y: f64| -y.cos() / y.sin();
    let (sa, sb) = (s(a), s(b));
    let down_to_up = 2.0 * adaptive_simpson(|y| (sb - s(y)) * speed_density(y), a, b, tol);
    let up_to_down = 2.0 * adaptive_simpson(|y| (s(y) - sa) * speed_density(y), a, b, tol);
    Ok(ExitTimes {
        down_to_up,
        up_to_down,
        cycle: down_to_up + up_to_down,
    })
}

/// Mean lower-face local time per down-to-up leg: `cos²θ1 (tan θ1 + tan θ2)`.
pub fn mean_leg_local_time_lower(angles: &WedgeAngles) -> Result<f64> {
    Ok(1.0 / exit_law_up(angles)?)
}

/// Mean upper-face local time per up-to-down leg: `cos²θ2 (tan θ1 + tan θ2)`.
pub fn mean_leg_local_time_upper(angles: &WedgeAngles) -> Result<f64> {
    Ok(1.0 / exit_law_down(angles)?)
}

/// `1/κ = (θ1 + θ2)(tan θ1 + tan θ2)`.
pub fn mean_cycle_displacement(angles: &WedgeAngles) -> Result<f64> {
    check_opening(angles)?;
    Ok((angles.theta1 + angles.theta2) * (angles.a1() + angles.a2()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementDecomposition {
    /// `-(tan θ1 cos²θ1 + tan θ2 cos²θ2)(tan θ1 + tan θ2)`: horizontal push from both faces.
    pub local_time_term: f64,
    /// Horizontal drift `1` times the expected cycle duration.
    pub drift_term: f64,
    pub total: f64,
}

pub fn displacement_decomposition(angles: &WedgeAngles) -> Result<DisplacementDecomposition> {
    let legs = expected_exit_time_legs(angles)?;
    let (t1, t2) = (angles.theta1, angles.theta2);
    let local_time_term =
        -(angles.a1() * t1.cos().powi(2) + angles.a2() * t2.cos().powi(2)) * (angles.a1() + angles.a2());
    Ok(DisplacementDecomposition {
        local_time_term,
        drift_term: legs.cycle,
        total: local_time_term + legs.cycle,
    })
}

/// Every constant for one angle pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsTable {
    pub params: DerivedParams,
    pub strip: StripInterval,
    pub exit_law_up: f64,
    pub exit_law_down: f64,
    pub exit_law_up_limit_form: f64,
    pub exit_times: ExitTimes,
    pub exit_times_quadrature: ExitTimes,
    pub mean_leg_local_time_lower: f64,
    pub mean_leg_local_time_upper: f64,
    pub mean_cycle_displacement: f64,
    pub displacement: DisplacementDecomposition,
}

pub fn constants_table(angles: &WedgeAngles) -> Result<ConstantsTable> {
    let strip = StripInterval::new(angles)?;
    Ok(ConstantsTable {
        params: derive(*angles)?,
        strip,
        exit_law_up: exit_law_up(angles)?,
        exit_law_down: exit_law_down(angles)?,
        exit_law_up_limit_form: exit_law_up_limit_form(&strip),
        exit_times: expected_exit_time_legs(angles)?,
        exit_times_quadrature: expected_exit_time_quadrature(angles, 1e-12)?,
        mean_leg_local_time_lower: mean_leg_local_time_lower(angles)?,
        mean_leg_local_time_upper: mean_leg_local_time_upper(angles)?,
        mean_cycle_displacement: mean_cycle_displacement(angles)?,
        displacement: displacement_decomposition(angles)?,
    })
}

/// Adaptive Simpson quadrature with Richardson correction; `tol` is absolute.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{CounterRng, Stream};

    fn reference() -> WedgeAngles {
        WedgeAngles::new(PI / 3.0, -PI / 6.0).unwrap()
    }

    fn random_angles(rng: &mut CounterRng) -> WedgeAngles {
        loop {
            let t1 = rng.next_range(-1.5, 1.5);
            let t2 = rng.next_range(-1.5, 1.5);
            if t1 + t2 > 0.02 {
                return WedgeAngles::new(t1, t2).unwrap();
            }
        }
    }

    #[test]
    fn scale_function_values() {
        assert!(scale_function(FRAC_PI_2).unwrap().abs() < 1e-16);
        assert!((scale_function(PI / 4.0).unwrap() + 1.0).abs() < 1e-15);
        assert!(scale_function(0.0).is_err());
        assert!(scale_function(PI).is_err());
        let mut prev = f64::NEG_INFINITY;
        for i in 1..1000 {
            let v = scale_function(PI * i as f64 / 1000.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn scale_times_speed_is_one() {
        for i in 1..10_000 {
            let x = PI * i as f64 / 10_000.0;
            assert!((scale_derivative(x).unwrap() * speed_density(x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hit_prob_values() {
        let iv = StripInterval::from_bounds(PI / 6.0, PI / 3.0).unwrap();
        assert_eq!(hit_prob(iv.a, &iv).unwrap(), 0.0);
        assert!((hit_prob(iv.b, &iv).unwrap() - 1.0).abs() < 1e-15);
        let expected = (-1.0 + 3f64.sqrt()) / (-1.0 / 3f64.sqrt() + 3f64.sqrt());
        assert!((hit_prob(PI / 4.0, &iv).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.6340).abs() < 1e-4);
        assert!(hit_prob(0.1, &iv).is_err());
    }

    #[test]
    fn exit_law_reference_value() {
        let v = exit_law_up(&reference()).unwrap();
        assert!((v - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        let iv = StripInterval::new(&reference()).unwrap();
        assert!((exit_law_up_limit_form(&iv) - v).abs() < 1e-12);
        assert!((exit_law_up_central(&iv, 1e-6) - v).abs() < 1e-10);
        let one_sided = exit_law_up_quotient(&iv, 1e-6).unwrap();
        assert!((one_sided - v).abs() < 1e-4 * v);
    }

    #[test]
    fn exit_laws_swap() {
        let mut rng = CounterRng::new(5, Stream::Aux);
        for _ in 0..1000 {
            let a = random_angles(&mut rng);
            let up = exit_law_up(&a).unwrap();
            assert!((exit_law_down(&a.swapped()).unwrap() - up).abs() <= 1e-12 * up);
            let iv = StripInterval::new(&a).unwrap();
            assert!((exit_law_up_limit_form(&iv) - up).abs() <= 1e-9 * up);
        }
        assert!(exit_law_up(&WedgeAngles::new(0.5, -0.5).unwrap()).is_err());
    }

    #[test]
    fn exit_time_reference_values() {
        let e = expected_exit_time_legs(&reference()).unwrap();
        assert!((e.down_to_up - 0.1977).abs() < 5e-5);
        assert!((e.up_to_down - 0.4069).abs() < 5e-5);
        let kappa_inv = mean_cycle_displacement(&reference()).unwrap();
        assert!((e.cycle - kappa_inv).abs() < 1e-12);
        assert!((kappa_inv - 0.6046).abs() < 5e-5);
    }

    #[test]
    fn exit_times_match_quadrature() {
        let mut rng = CounterRng::new(6, Stream::Aux);
        for _ in 0..200 {
            let a = random_angles(&mut rng);
            let c = expected_exit_time_legs(&a).unwrap();
            let q = expected_exit_time_quadrature(&a, 1e-12).unwrap();
            assert!((c.down_to_up - q.down_to_up).abs() < 1e-10, "{a:?}");
            assert!((c.up_to_down - q.up_to_down).abs() < 1e-10, "{a:?}");
        }
    }

    #[test]
    fn cycle_time_positive_and_vanishes_when_strip_collapses() {
        let mut rng = CounterRng::new(7, Stream::Aux);
        for _ in 0..1000 {
            assert!(expected_exit_time_legs(&random_angles(&mut rng)).unwrap().cycle > 0.0);
        }
        let t1 = 0.8;
        let mut prev = f64::INFINITY;
        for k in 1..8 {
            let eps = 10f64.powi(-k);
            let e = expected_exit_time_legs(&WedgeAngles::new(t1, -t1 + eps).unwrap()).unwrap();
            assert!(e.cycle < prev);
            prev = e.cycle;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn decomposition_identity() {
        let mut rng = CounterRng::new(8, Stream::Aux);
        for _ in 0..1000 {
            let a = random_angles(&mut rng);
            let d = displacement_decomposition(&a).unwrap();
            let target = mean_cycle_displacement(&a).unwrap();
            assert!((d.total - target).abs() < 1e-12 * (1.0 + target.abs()), "{a:?}");
        }
    }

    #[test]
    fn leg_local_times() {
        let a = reference();
        assert!((mean_leg_local_time_lower(&a).unwrap() - 0.25 * (3f64.sqrt() - 1.0 / 3f64.sqrt())).abs() < 1e-14);
        assert!((mean_leg_local_time_upper(&a).unwrap() - 0.75 * (3f64.sqrt() - 1.0 / 3f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn simpson_on_known_integrals() {
        assert!((adaptive_simpson(f64::sin, 0.0, PI, 1e-12) - 2.0).abs() < 1e-11);
        assert!((adaptive_simpson(|x| x.sqrt(), 0.0, 1.0, 1e-12) - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn table_serializes() {
        let t = constants_table(&reference()).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"exit_law_up\""));
    }
}
