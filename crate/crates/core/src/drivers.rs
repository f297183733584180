//! Driving paths: seeded Brownian grids and the deterministic amplification cycle.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::params::DerivedParams;
use crate::rng::{CounterRng, Stream};
use crate::{Error, Result, Vec2};

/// Largest number of steps a single driver may hold.
pub const DEFAULT_STEP_CAP: u64 = 50_000_000;

/// A time grid with 2D driving values; `values[0]` is the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingPath {
    times: Vec<f64>,
    values: Vec<Vec2>,
    seed: Option<u64>,
}

impl DrivingPath {
    /// Uniform grid `t_k = k dt`.
    pub fn from_values(dt: f64, values: Vec<Vec2>, seed: Option<u64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain {
                what: "dt",
                value: dt,
                domain: "(0, inf)",
            });
        }
        let times = (0..values.len()).map(|k| k as f64 * dt).collect();
        Self::from_times_values(times, values, seed)
    }

    pub fn from_times_values(times: Vec<f64>, values: Vec<Vec2>, seed: Option<u64>) -> Result<Self> {
        let p = DrivingPath { times, values, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 || self.times.len() != self.values.len() {
            return Err(Error::Invalid(format!(
                "driver needs at least 2 values on a matching grid (got {} values, {} times)",
                self.values.len(),
                self.times.len()
            )));
        }
        if self.values[0] != Vec2::ZERO {
            return Err(Error::Invalid(format!(
                "driver must start at the origin, found {}",
                self.values[0]
            )));
        }
        if let Some(k) = (1..self.times.len()).find(|&k| !(self.times[k] > self.times[k - 1])) {
            return Err(Error::Invalid(format!("time grid not strictly increasing at index {k}")));
        }
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite driver value at index {k}")));
        }
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec2] {
        &self.values
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Nominal step: the first grid spacing.
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Keep every `factor`-th grid point. Brownian increments stay exact.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !(self.len() - 1).is_multiple_of(factor) {
            return Err(Error::Invalid(format!(
                "cannot subsample {} steps by {factor}",
                self.len() - 1
            )));
        }
        Self::from_times_values(
            self.times.iter().step_by(factor).copied().collect(),
            self.values.iter().step_by(factor).copied().collect(),
            self.seed,
        )
    }

    /// Insert `factor - 1` linearly interpolated points in every step.
    pub fn refine_linear(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Invalid("refinement factor must be positive".into()));
        }
        let mut times = Vec::with_capacity((self.len() - 1) * factor + 1);
        let mut values = Vec::with_capacity(times.capacity());
        for k in 0..self.len() - 1 {
            for j in 0..factor {
                let w = j as f64 / factor as f64;
                times.push(self.times[k] + w * (self.times[k + 1] - self.times[k]));
                values.push(self.values[k] + (self.values[k + 1] - self.values[k]) * w);
            }
        }
        times.push(self.times[self.len() - 1]);
        values.push(self.values[self.len() - 1]);
        Self::from_times_values(times, values, self.seed)
    }

    pub const CSV_HEADER: [&'static str; 3] = ["t", "bx", "by"];

    pub fn write_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        let mut pre = preamble.to_vec();
        if let Some(s) = self.seed {
            pre.push(format!("seed={s}"));
        }
        csvio::write_table(
            out,
            &pre,
            &Self::CSV_HEADER,
            self.times
                .iter()
                .zip(&self.values)
                .map(|(t, v)| vec![*t, v.x, v.y]),
            &[],
        )
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let (rows, comments) = csvio::read_table(input, &Self::CSV_HEADER)?;
        let seed = comments
            .iter()
            .filter_map(|c| c.strip_prefix("seed="))
            .find_map(|s| s.trim().parse().ok());
        Self::from_times_values(
            rows.iter().map(|r| r[0]).collect(),
            rows.iter().map(|r| Vec2::new(r[1], r[2])).collect(),
            seed,
        )
    }
}

/// Gaussian increment `k` (0-based) of the seeded driver, before scaling by `√dt`.
#[inline]
pub fn standard_increment(rng: &CounterRng, k: u64) -> Vec2 {
    Vec2::new(rng.normal_at(2 * k), rng.normal_at(2 * k + 1))
}

/// Number of steps covering `[0, horizon]` at step `dt`, tolerant of
/// representation error in `horizon / dt`.
pub fn step_count(horizon: f64, dt: f64) -> Result<u64> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain {
            what: "horizon",
            value: horizon,
            domain: "(0, inf)",
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain {
            what: "dt",
            value: dt,
            domain: "(0, inf)",
        });
    }
    let ratio = horizon / dt;
    let nearest = ratio.round();
    let n = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        ratio.ceil()
    };
    if n >= u64::MAX as f64 {
        return Err(Error::StepCap {
            requested: u64::MAX,
            cap: DEFAULT_STEP_CAP,
        });
    }
    Ok((n as u64).max(1))
}

/// Seeded standard 2D Brownian motion on `t_k = k dt`, `k = 0..=⌈T/dt⌉`.
pub fn brownian_driver(seed: u64, horizon: f64, dt: f64) -> Result<DrivingPath> {
    brownian_driver_capped(seed, horizon, dt, DEFAULT_STEP_CAP)
}

pub fn brownian_driver_capped(seed: u64, horizon: f64, dt: f64, cap: u64) -> Result<DrivingPath> {
    let n = step_count(horizon, dt)?;
    if n > cap {
        return Err(Error::StepCap { requested: n, cap });
    }
    let rng = CounterRng::new(seed, Stream::Noise);
    let sd = dt.sqrt();
    let mut values = Vec::with_capacity(n as usize + 1);
    let mut v = Vec2::ZERO;
    values.push(v);
    for k in 0..n {
        v += standard_increment(&rng, k) * sd;
        values.push(v);
    }
    let times = (0..=n).map(|k| k as f64 * dt).collect();
    Ok(DrivingPath {
        times,
        values,
        seed: Some(seed),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegKind {
    Up,
    Left,
    Right,
    Down,
}

impl LegKind {
    fn direction(self) -> Vec2 {
        match self {
            LegKind::Up => Vec2::new(0.0, 1.0),
            LegKind::Left => Vec2::new(-1.0, 0.0),
            LegKind::Right => Vec2::new(1.0, 0.0),
            LegKind::Down => Vec2::new(0.0, -1.0),
        }
    }
}

/// One straight leg of the cycle driver, with the hand-computed positions
/// of both starts at its end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub kind: LegKind,
    pub length: f64,
    /// Driver index at which the leg ends.
    pub end_index: usize,
    pub first_end: Vec2,
    pub second_end: Vec2,
}

/// Parameters of the deterministic cycle driver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CyclePlan {
    /// Initial horizontal offset of the second start.
    pub eta: f64,
    /// Extra travel added to every leg.
    pub margin: f64,
    /// Common height of both starts; the first start is `(0, y0)`.
    pub y0: f64,
    /// Maximal spatial step along a leg (also the time step).
    pub dt: f64,
    pub cycles: usize,
}

impl CyclePlan {
    pub fn new(eta: f64) -> Self {
        CyclePlan {
            eta,
            margin: 0.1 * eta,
            y0: 1.0,
            dt: 1e-3,
            cycles: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleDriver {
    pub plan: CyclePlan,
    pub driver: DrivingPath,
    pub first_start: Vec2,
    pub second_start: Vec2,
    pub legs: Vec<Leg>,
}

/// Hand geometry of a single straight leg for one point, assuming the
/// other face is never reached. Returns the end point.
fn leg_end(p: Vec2, kind: LegKind, length: f64, a1: f64, a2: f64) -> Vec2 {
    match kind {
        // Pushing off x = 0 along (1, -a2) absorbs the overshoot.
        LegKind::Left if length > p.x => Vec2::new(0.0, p.y - a2 * (length - p.x)),
        LegKind::Left => Vec2::new(p.x - length, p.y),
        LegKind::Right => Vec2::new(p.x + length, p.y),
        LegKind::Up => Vec2::new(p.x, p.y + length),
        // Pushing off y = 0 along (-a1, 1).
        LegKind::Down if length > p.y => Vec2::new(p.x - a1 * (length - p.y), 0.0),
        LegKind::Down => Vec2::new(p.x, p.y - length),
    }
}

/// Piecewise-linear driver forcing the gap-amplification cycle on the starts
/// `(0, y0)` and `(eta, y0)`.
///
/// Each cycle is four legs: up (clear of the lower face), left (both onto the
/// upper face; the gap turns vertical with factor `|a2|`), right (clear of
/// the upper face), down (both onto the lower face; the gap turns horizontal
/// with factor `|a1|`). Leg lengths come from the hand geometry so that the
/// corner is never reached.
pub fn build_cycle_driver(params: &DerivedParams, plan: &CyclePlan) -> Result<CycleDriver> {
    let (a1, a2) = (params.a1, params.a2);
    if !(plan.eta >= 0.0 && plan.eta.is_finite()) {
        return Err(Error::Domain {
            what: "eta",
            value: plan.eta,
            domain: "[0, inf)",
        });
    }
    if !(plan.margin > 0.0 && plan.dt > 0.0 && plan.y0 > 0.0) {
        return Err(Error::Invalid(format!(
            "cycle plan needs positive margin, dt and y0, got {plan:?}"
        )));
    }
    let m = plan.margin;
    let first_start = Vec2::new(0.0, plan.y0);
    let second_start = Vec2::new(plan.eta, plan.y0);
    let (mut p, mut q) = (first_start, second_start);
    let mut legs = Vec::with_capacity(4 * plan.cycles);
    let mut vertices = vec![Vec2::ZERO];
    let mut index = 0usize;
    for _ in 0..plan.cycles {
        for kind in [LegKind::Up, LegKind::Left, LegKind::Right, LegKind::Down] {
            let length = match kind {
                LegKind::Up => {
                    let gap = (p.x - q.x).abs();
                    a2.max(0.0) * (gap + m) + m
                }
                LegKind::Left => p.x.max(q.x) + m,
                LegKind::Right => {
                    let gap = (p.y - q.y).abs();
                    a1.abs() * (gap + m) + m
                }
                LegKind::Down => p.y.max(q.y) + m,
            };
            let n = ((length / plan.dt).ceil() as usize).max(1);
            let start = *vertices.last().expect("nonempty");
            let dir = kind.direction();
            for j in 1..=n {
                let s = if j == n { length } else { length * j as f64 / n as f64 };
                vertices.push(start + dir * s);
            }
            index += n;
            p = leg_end(p, kind, length, a1, a2);
            q = leg_end(q, kind, length, a1, a2);
            legs.push(Leg {
                kind,
                length,
                end_index: index,
                first_end: p,
                second_end: q,
            });
        }
    }
    let driver = DrivingPath::from_values(plan.dt, vertices, None)?;
    Ok(CycleDriver {
        plan: *plan,
        driver,
        first_start,
        second_start,
        legs,
    })
}

/// Single-cycle driver with start height 1 and step `1e-3`.
pub fn cycle_driver(params: &DerivedParams, eta: f64, margin: f64) -> Result<DrivingPath> {
    let plan = CyclePlan {
        margin,
        ..CyclePlan::new(eta)
    };
    Ok(build_cycle_driver(params, &plan)?.driver)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive, WedgeAngles};

    #[test]
    fn shape_and_origin() {
        let d = brownian_driver(7, 1.0, 0.5).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.values()[0], Vec2::ZERO);
        assert_eq!(d.times(), &[0.0, 0.5, 1.0]);
        assert_eq!(brownian_driver(7, 1.0, 0.3).unwrap().len(), 5);
        assert_eq!(brownian_driver(7, 0.3, 0.1).unwrap().len(), 4);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = brownian_driver(42, 0.2, 1e-3).unwrap();
        let b = brownian_driver(42, 0.2, 1e-3).unwrap();
        let c = brownian_driver(43, 0.2, 1e-3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn step_cap_enforced() {
        assert!(matches!(
            brownian_driver_capped(1, 1.0, 1e-3, 100),
            Err(Error::StepCap { requested: 1000, cap: 100 })
        ));
        assert!(brownian_driver(1, -1.0, 0.1).is_err());
        assert!(brownian_driver(1, 1.0, 0.0).is_err());
    }

    #[test]
    fn increments_have_unit_rate() {
        let dt = 1e-2;
        let d = brownian_driver(2024, 1e4, dt).unwrap();
        let n = (d.len() - 1) as f64;
        let incs: Vec<Vec2> = d.values().windows(2).map(|w| w[1] - w[0]).collect();
        for coord in [0usize, 1] {
            let xs: Vec<f64> = incs.iter().map(|v| if coord == 0 { v.x } else { v.y }).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 4.0 * (dt / n).sqrt(), "mean {mean}");
            assert!((var / dt - 1.0).abs() < 0.01, "var ratio {}", var / dt);
        }
    }

    #[test]
    fn subsample_and_refine() {
        let d = brownian_driver(9, 1.0, 0.125).unwrap();
        let s = d.subsample(2).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.values()[2], d.values()[4]);
        assert!(d.subsample(3).is_err());
        let r = s.refine_linear(2).unwrap();
        assert_eq!(r.times(), d.times());
        assert_eq!(r.values()[4], d.values()[4]);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let d = brownian_driver(5, 0.05, 1e-3).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf, &["note".into()]).unwrap();
        assert_eq!(DrivingPath::read_csv(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(DrivingPath::from_values(0.1, vec![Vec2::ZERO], None).is_err());
        assert!(DrivingPath::from_values(0.1, vec![Vec2::new(1.0, 0.0); 3], None).is_err());
        assert!(DrivingPath::from_times_values(vec![0.0, 0.0], vec![Vec2::ZERO; 2], None).is_err());
    }

    #[test]
    fn cycle_hand_geometry() {
        let p = derive(WedgeAngles::new(1.2, -1.0).unwrap()).unwrap();
        let eta = 0.05;
        let cd = build_cycle_driver(&p, &CyclePlan::new(eta)).unwrap();
        let kinds: Vec<LegKind> = cd.legs.iter().map(|l| l.kind).collect();
        assert_eq!(kinds, [LegKind::Up, LegKind::Left, LegKind::Right, LegKind::Down]);
        let left = cd.legs[1];
        assert!((left.length - 1.1 * eta).abs() < 1e-15);
        assert_eq!(left.first_end.x, 0.0);
        assert_eq!(left.second_end.x, 0.0);
        let vgap = (left.first_end - left.second_end).y;
        assert!((vgap - p.a2.abs() * eta).abs() < 1e-12);
        let down = cd.legs[3];
        assert_eq!(down.first_end.y, 0.0);
        assert_eq!(down.second_end.y, 0.0);
        assert!(down.first_end.x > 0.0 && down.second_end.x > 0.0);
        let hgap = (down.first_end - down.second_end).x.abs();
        assert!((hgap - p.beta * eta).abs() < 1e-12);
    }

    #[test]
    fn cycle_leg_vertices_are_exact() {
        let p = derive(WedgeAngles::new(1.2, -1.0).unwrap()).unwrap();
        let cd = build_cycle_driver(&p, &CyclePlan { cycles: 2, ..CyclePlan::new(0.1) }).unwrap();
        let v = cd.driver.values();
        let mut start = Vec2::ZERO;
        let mut prev = 0;
        for leg in &cd.legs {
            let end = start + leg.kind.direction() * leg.length;
            assert_eq!(v[leg.end_index], end);
            for k in prev + 1..leg.end_index {
                let step = (v[k] - v[k - 1]).norm();
                assert!(step <= cd.plan.dt * (1.0 + 1e-12));
            }
            start = end;
            prev = leg.end_index;
        }
        assert_eq!(prev + 1, v.len());
    }

    #[test]
    fn zero_eta_is_allowed() {
        let p = derive(WedgeAngles::new(1.2, -1.0).unwrap()).unwrap();
        let d = cycle_driver(&p, 0.0, 0.01).unwrap();
        assert!(d.len() > 4);
    }
}
