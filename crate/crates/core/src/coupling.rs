//! Two reflected solutions off one driver and the dynamics of their gap.
//!
//! Starting from an aligned gap (parallel to one face), a *stage* runs until
//! both paths sit on the other face: one path (the leader) reaches it first,
//! absorbs local time while the other catches up, and the gap turns to lie
//! along the new face. On the upper face the gap is multiplied by `|a2|`, on
//! the lower face by `|a1|`; an upper stage followed by a lower stage is a
//! cycle with factor `β = |a1 a2|`. A touch of the face the pair just left,
//! by one path only, breaks the pattern.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::drivers::{standard_increment, DrivingPath};
use crate::params::DerivedParams;
use crate::reflect::{one_step_reflect, Face, LcpStep, ReflectedPath, ReflectionSpec, FACE_TOL};
use crate::rng::{CounterRng, Stream};
use crate::sim::{clip_drift, drift_cap, DriftSpec, McReport};
use crate::{Error, Result, Vec2};

/// Relative tolerance for "gap parallel to a face".
pub const PARALLEL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Gap taken as the reference without a completed stage.
    Anchor,
    /// The leader reaches the new face.
    Perpendicular,
    /// The trailer reaches the new face; a stage factor is recorded.
    Parallel,
    /// The interleaving failed.
    Break,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub kind: EventKind,
    pub face: Face,
    pub index: usize,
    pub leader: Option<Which>,
    /// `first - second` after the step.
    pub gap: Vec2,
    pub factor: Option<f64>,
    /// For perpendicular events: the gap still lies along the previous face
    /// and the leader is the path nearer the new face.
    pub orientation_ok: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub face: Face,
    pub index: usize,
    pub factor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Phase {
    Aligned { face: Face, reference: f64 },
    Leading { face: Face, leader: Which, reference: f64 },
    Lost,
}

fn other(face: Face) -> Face {
    match face {
        Face::Lower => Face::Upper,
        Face::Upper => Face::Lower,
    }
}

/// Whether `gap` lies along `face` (no component along its normal).
pub fn parallel_to(spec: &ReflectionSpec, face: Face, gap: Vec2) -> bool {
    let n = gap.norm();
    n > 0.0 && gap.dot(spec.normal(face)).abs() <= PARALLEL_TOL * n
}

/// Stage detector fed one step pair at a time.
#[derive(Clone, Debug)]
pub struct StageTracker {
    spec: ReflectionSpec,
    phase: Phase,
    last_stage: Option<Stage>,
    pub events: Vec<StageEvent>,
    pub stages: Vec<Stage>,
    pub cycle_factors: Vec<f64>,
    pub breaks: usize,
}

impl StageTracker {
    /// Anchor on the initial gap: along the lower face counts as a lower-face
    /// alignment, along the upper face as an upper-face alignment.
    pub fn new(spec: ReflectionSpec, x0: Vec2, y0: Vec2) -> Self {
        let mut t = StageTracker {
            spec,
            phase: Phase::Lost,
            last_stage: None,
            events: Vec::new(),
            stages: Vec::new(),
            cycle_factors: Vec::new(),
            breaks: 0,
        };
        let gap = x0 - y0;
        for face in [Face::Lower, Face::Upper] {
            if parallel_to(&spec, face, gap) {
                t.anchor(face, 0, gap);
                break;
            }
        }
        t
    }

    fn anchor(&mut self, face: Face, index: usize, gap: Vec2) {
        self.phase = Phase::Aligned {
            face,
            reference: gap.norm(),
        };
        self.events.push(StageEvent {
            kind: EventKind::Anchor,
            face,
            index,
            leader: None,
            gap,
            factor: None,
            orientation_ok: true,
        });
    }

    fn lose(&mut self, face: Face, index: usize, gap: Vec2) {
        self.phase = Phase::Lost;
        self.last_stage = None;
        self.breaks += 1;
        self.events.push(StageEvent {
            kind: EventKind::Break,
            face,
            index,
            leader: None,
            gap,
            factor: None,
            orientation_ok: false,
        });
    }

    fn complete(&mut self, face: Face, index: usize, leader: Option<Which>, gap: Vec2, reference: f64) {
        let factor = gap.norm() / reference;
        self.events.push(StageEvent {
            kind: EventKind::Parallel,
            face,
            index,
            leader,
            gap,
            factor: Some(factor),
            orientation_ok: true,
        });
        let stage = Stage { face, index, factor };
        self.stages.push(stage);
        if let (Face::Lower, Some(prev)) = (face, self.last_stage) {
            if prev.face == Face::Upper {
                self.cycle_factors.push(prev.factor * factor);
            }
        }
        self.last_stage = Some(stage);
        self.phase = Phase::Aligned {
            face,
            reference: gap.norm(),
        };
    }

    /// Current face alignment, if any.
    pub fn aligned_face(&self) -> Option<Face> {
        match self.phase {
            Phase::Aligned { face, .. } => Some(face),
            _ => None,
        }
    }

    /// Replace the reference gap length of the current alignment.
    pub fn set_reference(&mut self, len: f64) {
        if let Phase::Aligned { face, .. } = self.phase {
            self.phase = Phase::Aligned { face, reference: len };
        }
    }

    /// Process step `k` with pre-states `(x, y)` and the two resolved steps.
    pub fn observe(&mut self, k: usize, x: Vec2, y: Vec2, sx: &LcpStep, sy: &LcpStep) {
        let spec = self.spec;
        let on = |face: Face, s: &LcpStep| spec.face_distance(face, s.post_state) <= FACE_TOL;
        let gap = sx.post_state - sy.post_state;
        match self.phase {
            Phase::Aligned { face, reference } => {
                let new = other(face);
                let (tx, ty) = (on(new, sx), on(new, sy));
                let (ox, oy) = (on(face, sx), on(face, sy));
                if ox != oy {
                    self.lose(face, k, gap);
                    return;
                }
                if !(tx || ty) {
                    return;
                }
                if ox && oy {
                    // Both in the corner: no usable alignment.
                    self.lose(new, k, gap);
                    return;
                }
                let leader = if tx && !ty {
                    Some(Which::First)
                } else if ty && !tx {
                    Some(Which::Second)
                } else {
                    None
                };
                let pre_gap = x - y;
                let nearer_ok = match leader {
                    Some(Which::First) => spec.face_distance(new, x) <= spec.face_distance(new, y),
                    Some(Which::Second) => spec.face_distance(new, y) <= spec.face_distance(new, x),
                    None => true,
                };
                self.events.push(StageEvent {
                    kind: EventKind::Perpendicular,
                    face: new,
                    index: k,
                    leader,
                    gap,
                    factor: None,
                    orientation_ok: nearer_ok && parallel_to(&spec, face, pre_gap),
                });
                if tx && ty {
                    if parallel_to(&spec, new, gap) {
                        self.complete(new, k, leader, gap, reference);
                    } else {
                        self.lose(new, k, gap);
                    }
                } else {
                    self.phase = Phase::Leading {
                        face: new,
                        leader: leader.expect("one leader"),
                        reference,
                    };
                }
            }
            Phase::Leading { face, leader, reference } => {
                let old = other(face);
                if on(old, sx) || on(old, sy) {
                    self.lose(face, k, gap);
                    return;
                }
                let trailer_on = match leader {
                    Which::First => on(face, sy),
                    Which::Second => on(face, sx),
                };
                if trailer_on {
                    if parallel_to(&spec, face, gap) && (on(face, sx) && on(face, sy)) {
                        self.complete(face, k, Some(leader), gap, reference);
                    } else {
                        self.lose(face, k, gap);
                    }
                }
            }
            Phase::Lost => {
                for face in [Face::Lower, Face::Upper] {
                    if on(face, sx) && on(face, sy) && !(on(other(face), sx) || on(other(face), sy)) {
                        if parallel_to(&spec, face, gap) {
                            self.anchor(face, k, gap);
                        }
                        break;
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub times: Vec<f64>,
    /// `first - second` at every grid time.
    pub gap: Vec<Vec2>,
    pub first: ReflectedPath,
    pub second: ReflectedPath,
    pub events: Vec<StageEvent>,
    pub stages: Vec<Stage>,
    pub cycle_factors: Vec<f64>,
    pub pattern_breaks: usize,
}

impl CouplingReport {
    /// Factor of the first complete cycle, if any.
    pub fn cycle_factor(&self) -> Option<f64> {
        self.cycle_factors.first().copied()
    }

    /// Product of all cycle factors.
    pub fn cumulative_factor(&self) -> Option<f64> {
        (!self.cycle_factors.is_empty()).then(|| self.cycle_factors.iter().product())
    }

    /// Breaks over attempted stages (completed stages plus breaks).
    pub fn pattern_break_rate(&self) -> f64 {
        let attempts = self.stages.len() + self.pattern_breaks;
        if attempts == 0 {
            0.0
        } else {
            self.pattern_breaks as f64 / attempts as f64
        }
    }

    pub const GAP_CSV_HEADER: [&'static str; 3] = ["t", "gx", "gy"];

    pub fn write_gap_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        csvio::write_table(
            out,
            preamble,
            &Self::GAP_CSV_HEADER,
            self.times.iter().zip(&self.gap).map(|(t, g)| vec![*t, g.x, g.y]),
            &[],
        )
    }
}

fn drifted(drift: &DriftSpec, z: Vec2, disp: Vec2, h: f64, k: usize) -> Result<Vec2> {
    if drift.is_none() {
        return Ok(disp);
    }
    let (d, _) = clip_drift(drift.at(z).map_err(|e| e.at_step(k))?, drift_cap(h));
    Ok(disp + d * h)
}

/// Solve both paths with the same driver increments; drift, if any, is
/// evaluated at each path's own state.
pub fn run_pair(
    driver: &DrivingPath,
    x0: Vec2,
    y0: Vec2,
    spec: &ReflectionSpec,
    drift: &DriftSpec,
) -> Result<CouplingReport> {
    driver.validate()?;
    for p in [x0, y0] {
        if !spec.contains(p, 0.0) {
            return Err(Error::OutsideDomain { point: p });
        }
    }
    let (ts, vs) = (driver.times(), driver.values());
    let mut first = ReflectedPath::with_start(ts[0], x0, spec, vs.len());
    let mut second = ReflectedPath::with_start(ts[0], y0, spec, vs.len());
    let mut gap = Vec::with_capacity(vs.len());
    gap.push(x0 - y0);
    let mut tracker = StageTracker::new(*spec, x0, y0);
    let (mut x, mut y) = (x0, y0);
    for k in 1..vs.len() {
        let inc = vs[k] - vs[k - 1];
        let h = ts[k] - ts[k - 1];
        let sx = one_step_reflect(x, drifted(drift, x, inc, h, k)?, spec).map_err(|e| e.at_step(k))?;
        let sy = one_step_reflect(y, drifted(drift, y, inc, h, k)?, spec).map_err(|e| e.at_step(k))?;
        tracker.observe(k, x, y, &sx, &sy);
        first.push_step(ts[k], &sx, spec);
        second.push_step(ts[k], &sy, spec);
        x = sx.post_state;
        y = sy.post_state;
        gap.push(x - y);
    }
    Ok(CouplingReport {
        times: ts.to_vec(),
        gap,
        first,
        second,
        events: tracker.events,
        stages: tracker.stages,
        cycle_factors: tracker.cycle_factors,
        pattern_breaks: tracker.breaks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapGrowth {
    /// Factors of pattern-conforming cycles, in order.
    pub factors: Vec<f64>,
    pub pattern_breaks: usize,
    pub stages: usize,
    pub steps: usize,
    /// Mean and standard error of `log factor`; absent with fewer than two cycles.
    pub log_mean: Option<McReport>,
}

/// Run one seeded coupled pair in the quadrant from `(1, 0)` and
/// `(1 + eta, 0)`, collecting up to `n_cycles` cycle factors.
///
/// Each time the pair aligns on the lower face the gap is rescaled to length
/// `eta` (both paths are on that face, so the rescaled pair is again a valid
/// aligned start); every cycle is therefore measured from gap `eta`.
pub fn stochastic_gap_growth(
    seed: u64,
    params: &DerivedParams,
    eta: f64,
    n_cycles: usize,
    dt: f64,
    max_steps: usize,
) -> Result<GapGrowth> {
    let spec = ReflectionSpec::quadrant(params.a1, params.a2)?;
    let empty = GapGrowth {
        factors: Vec::new(),
        pattern_breaks: 0,
        stages: 0,
        steps: 0,
        log_mean: None,
    };
    if eta == 0.0 || n_cycles == 0 {
        return Ok(empty);
    }
    if !(eta > 0.0 && dt > 0.0) {
        return Err(Error::Invalid(format!("need eta > 0 and dt > 0, got {eta}, {dt}")));
    }
    let rng = CounterRng::new(seed, Stream::Noise);
    let sd = dt.sqrt();
    let mut x = Vec2::new(1.0, 0.0);
    let mut y = Vec2::new(1.0 + eta, 0.0);
    let mut tracker = StageTracker::new(spec, x, y);
    let mut driven = Vec2::ZERO;
    let mut steps = 0;
    for k in 1..=max_steps {
        let next = driven + standard_increment(&rng, (k - 1) as u64) * sd;
        let inc = next - driven;
        driven = next;
        let sx = one_step_reflect(x, inc, &spec).map_err(|e| e.at_step(k))?;
        let sy = one_step_reflect(y, inc, &spec).map_err(|e| e.at_step(k))?;
        let before = tracker.events.len();
        tracker.observe(k, x, y, &sx, &sy);
        x = sx.post_state;
        y = sy.post_state;
        steps = k;
        let realigned = tracker.events[before..]
            .iter()
            .any(|e| matches!(e.kind, EventKind::Parallel | EventKind::Anchor) && e.face == Face::Lower);
        if realigned && tracker.aligned_face() == Some(Face::Lower) {
            let g = x - y;
            let rescaled = g * (eta / g.norm());
            y = x - rescaled;
            y.y = 0.0;
            tracker.set_reference(eta);
        }
        if tracker.cycle_factors.len() >= n_cycles {
            break;
        }
    }
    let logs: Vec<f64> = tracker.cycle_factors.iter().map(|f| f.ln()).collect();
    let log_mean = if logs.len() >= 2 {
        Some(McReport::from_values(&logs, seed)?)
    } else {
        None
    };
    Ok(GapGrowth {
        factors: tracker.cycle_factors,
        pattern_breaks: tracker.breaks,
        stages: tracker.stages.len(),
        steps,
        log_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{brownian_driver, build_cycle_driver, CyclePlan};
    use crate::params::{derive, WedgeAngles};

    fn theorem_params() -> DerivedParams {
        derive(WedgeAngles::new(3.0 * std::f64::consts::PI / 8.0 - 0.05, -3.0 * std::f64::consts::PI / 8.0 + 0.10).unwrap())
            .unwrap()
    }

    #[test]
    fn identical_starts_give_identical_paths() {
        let spec = ReflectionSpec::quadrant(2.0, -1.5).unwrap();
        let d = brownian_driver(4, 2.0, 1e-3).unwrap();
        let r = run_pair(&d, Vec2::new(0.1, 0.2), Vec2::new(0.1, 0.2), &spec, &DriftSpec::None).unwrap();
        assert_eq!(r.first, r.second);
        assert!(r.gap.iter().all(|g| *g == Vec2::ZERO));
        assert!(r.stages.is_empty());
    }

    #[test]
    fn cycle_driver_factors() {
        let p = theorem_params();
        let spec = ReflectionSpec::quadrant(p.a1, p.a2).unwrap();
        let cd = build_cycle_driver(&p, &CyclePlan { cycles: 2, ..CyclePlan::new(0.01) }).unwrap();
        let r = run_pair(&cd.driver, cd.first_start, cd.second_start, &spec, &DriftSpec::None).unwrap();
        assert_eq!(r.pattern_breaks, 0);
        let faces: Vec<Face> = r.stages.iter().map(|s| s.face).collect();
        assert_eq!(faces, [Face::Upper, Face::Lower, Face::Upper, Face::Lower]);
        assert!((r.stages[0].factor - p.a2.abs()).abs() < 1e-9);
        assert!((r.stages[1].factor - p.a1.abs()).abs() < 1e-9);
        assert!((r.cycle_factor().unwrap() - p.beta).abs() < 1e-9);
        assert!((r.cumulative_factor().unwrap() - p.beta * p.beta).abs() < 1e-8);
        for e in r.events.iter().filter(|e| e.kind == EventKind::Perpendicular) {
            assert!(e.orientation_ok, "{e:?}");
        }
        // Hand geometry agrees with the solved states at every leg end.
        for leg in &cd.legs {
            assert!((r.first.states[leg.end_index] - leg.first_end).norm() < 1e-12);
            assert!((r.second.states[leg.end_index] - leg.second_end).norm() < 1e-12);
        }
    }

    #[test]
    fn gap_constant_on_interior_steps() {
        let spec = ReflectionSpec::quadrant(1.5, -1.2).unwrap();
        let d = brownian_driver(8, 1.0, 1e-3).unwrap();
        let r = run_pair(&d, Vec2::new(0.3, 0.2), Vec2::new(0.35, 0.25), &spec, &DriftSpec::None).unwrap();
        for k in 1..r.gap.len() {
            let interior = |p: &ReflectedPath| p.l_lower[k] == p.l_lower[k - 1] && p.l_upper[k] == p.l_upper[k - 1];
            if interior(&r.first) && interior(&r.second) {
                assert!((r.gap[k] - r.gap[k - 1]).norm() <= 4.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn zero_eta_gives_empty_report() {
        let g = stochastic_gap_growth(1, &theorem_params(), 0.0, 10, 1e-4, 1000).unwrap();
        assert!(g.factors.is_empty());
        assert!(g.log_mean.is_none());
    }

    #[test]
    fn stochastic_cycles_conform_to_beta() {
        let p = theorem_params();
        let g = stochastic_gap_growth(3, &p, 1e-3, 20, 1e-4, 5_000_000).unwrap();
        assert!(g.factors.len() >= 2, "{g:?}");
        for f in &g.factors {
            assert!((f - p.beta).abs() < 1e-6 * p.beta);
        }
    }

    #[test]
    fn contraction_below_one() {
        let p = derive(WedgeAngles::new(0.6, -0.3).unwrap()).unwrap();
        assert!(p.beta < 1.0);
        let g = stochastic_gap_growth(5, &p, 1e-3, 20, 1e-4, 5_000_000).unwrap();
        let m = g.log_mean.expect("cycles");
        assert!(m.estimate < 0.0);
    }
}
