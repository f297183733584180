//! Euler simulation of reflected diffusions with stop rules, excursion
//! statistics and the Monte Carlo harness.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::conformal::MapSpec;
use crate::drivers::{standard_increment, step_count, DrivingPath};
use crate::reflect::{one_step_reflect, LcpStep, ReflectedPath, ReflectionSpec};
use crate::rng::{CounterRng, Stream};
use crate::{Error, Result, Vec2};

pub mod excursions;
pub mod hitting;
pub mod montecarlo;

pub use excursions::{excursion_stats, ExcursionStats, ExcursionTracker, WindowSpec};
pub use montecarlo::{monte_carlo, McConfig, McReport};

/// Fraction of clipped steps above which a run is flagged.
pub const DEFAULT_CLIP_FLAG_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    None,
    /// `∇h / h` in the quadrant.
    HTransform(MapSpec),
    /// `(1, cot y)` in the strip.
    StripConditioned,
}

impl DriftSpec {
    pub fn at(&self, z: Vec2) -> Result<Vec2> {
        match self {
            DriftSpec::None => Ok(Vec2::ZERO),
            DriftSpec::HTransform(map) => map.log_h_gradient(z),
            DriftSpec::StripConditioned => {
                let s = z.y.sin();
                if !(z.y > 0.0 && z.y < PI) {
                    return Err(Error::Domain {
                        what: "strip height",
                        value: z.y,
                        domain: "(0, pi)",
                    });
                }
                Ok(Vec2::new(1.0, z.y.cos() / s))
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, DriftSpec::None)
    }
}

/// Per-coordinate drift cap `1 / (10 √dt)`.
#[inline]
pub fn drift_cap(dt: f64) -> f64 {
    0.1 / dt.sqrt()
}

/// Clip each coordinate of `d` to `[-cap, cap]`; reports whether clipping fired.
#[inline]
pub fn clip_drift(d: Vec2, cap: f64) -> (Vec2, bool) {
    let c = Vec2::new(d.x.clamp(-cap, cap), d.y.clamp(-cap, cap));
    (c, c != d)
}

/// Scalar functions of the state used by level rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// `h(z)` in the quadrant.
    H(MapSpec),
    /// The second coordinate.
    Vertical,
    /// `x + log sin y` in the strip (log of `h` pulled back to the strip).
    LogScale,
}

impl Observable {
    #[inline]
    pub fn value(&self, z: Vec2) -> f64 {
        match self {
            Observable::H(m) => m.h_value(z),
            Observable::Vertical => z.y,
            Observable::LogScale => z.x + z.y.sin().ln(),
        }
    }

    /// `|∇ obs|²`, the local variance rate of the observable.
    #[inline]
    pub fn gradient_sq(&self, z: Vec2) -> f64 {
        match self {
            Observable::H(m) => m.h_gradient(z).map(|g| g.norm_sq()).unwrap_or(f64::INFINITY),
            Observable::Vertical => 1.0,
            Observable::LogScale => 1.0 / z.y.sin().powi(2),
        }
    }

    /// Value at a point that may lie slightly outside the domain, if defined there.
    fn value_unprojected(&self, z: Vec2) -> Option<f64> {
        match self {
            Observable::H(_) => None,
            Observable::Vertical => Some(z.y),
            Observable::LogScale => (z.y > 0.0 && z.y < PI).then(|| self.value(z)),
        }
    }
}

/// Stop when the observable reaches `lower` or `upper`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRule {
    pub observable: Observable,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Also stop, with the Brownian-bridge probability, when a level is
    /// crossed and recrossed between grid points.
    pub bridge: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRules {
    pub horizon: f64,
    pub level: Option<LevelRule>,
    /// Stop on entering `|z| < 10 √dt`.
    pub origin_guard: bool,
}

impl StopRules {
    pub fn horizon(horizon: f64) -> Self {
        StopRules {
            horizon,
            level: None,
            origin_guard: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Horizon,
    LevelLower,
    LevelUpper,
    OriginGuard,
    Observer,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Horizon => "horizon",
            StopReason::LevelLower => "level_lower",
            StopReason::LevelUpper => "level_upper",
            StopReason::OriginGuard => "origin_guard",
            StopReason::Observer => "observer",
        }
    }

    pub fn is_level_hit(&self) -> bool {
        matches!(self, StopReason::LevelLower | StopReason::LevelUpper)
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Source of driving noise.
#[derive(Clone, Copy, Debug)]
pub enum DriverInput<'a> {
    Path(&'a DrivingPath),
    /// Streamed increments identical to `brownian_driver(seed, _, dt)`.
    Seeded { seed: u64, dt: f64 },
}

/// Receives every resolved step.
pub trait StepObserver {
    fn on_step(&mut self, k: usize, t: f64, step: &LcpStep) -> ControlFlow<()>;
}

impl StepObserver for () {
    fn on_step(&mut self, _: usize, _: f64, _: &LcpStep) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

impl<A: StepObserver, B: StepObserver> StepObserver for (A, B) {
    fn on_step(&mut self, k: usize, t: f64, step: &LcpStep) -> ControlFlow<()> {
        let a = self.0.on_step(k, t, step);
        let b = self.1.on_step(k, t, step);
        if a.is_break() || b.is_break() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }
}

impl<T: StepObserver + ?Sized> StepObserver for &mut T {
    fn on_step(&mut self, k: usize, t: f64, step: &LcpStep) -> ControlFlow<()> {
        (**self).on_step(k, t, step)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stop_reason: StopReason,
    /// Interpolated for level hits, grid time otherwise.
    pub stop_time: f64,
    pub stop_state: Vec2,
    pub steps: usize,
    pub drift_clips: usize,
    pub l_lower: f64,
    pub l_upper: f64,
    pub flags: Vec<String>,
}

impl RunSummary {
    pub fn clip_fraction(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.drift_clips as f64 / self.steps as f64
        }
    }
}

/// Run the Euler scheme: per step, displacement = driver increment +
/// drift(state)·dt, then one reflection step; stops at the first satisfied
/// rule or when the observer breaks.
pub fn run<O: StepObserver>(
    x0: Vec2,
    spec: &ReflectionSpec,
    drift: &DriftSpec,
    driver: DriverInput<'_>,
    stop: &StopRules,
    mut observer: O,
) -> Result<RunSummary> {
    if !spec.contains(x0, 0.0) {
        return Err(Error::OutsideDomain { point: x0 });
    }
    if let DriftSpec::HTransform(_) = drift {
        if x0 == Vec2::ZERO {
            return Err(Error::OutsideDomain { point: x0 });
        }
    }
    let (n_steps, nominal_dt, bridge_seed) = match driver {
        DriverInput::Path(p) => {
            p.validate()?;
            let n = p.times().partition_point(|&t| t <= stop.horizon).max(2) - 1;
            (n, p.dt(), p.seed().unwrap_or(0))
        }
        DriverInput::Seeded { seed, dt } => (step_count(stop.horizon, dt)? as usize, dt, seed),
    };
    let noise = match driver {
        DriverInput::Seeded { seed, .. } => Some(CounterRng::new(seed, Stream::Noise)),
        DriverInput::Path(_) => None,
    };
    let bridge_rng = CounterRng::new(bridge_seed, Stream::Bridge);
    let sd = nominal_dt.sqrt();
    let guard = 10.0 * sd;

    let mut state = x0;
    let mut t = 0.0;
    let mut driven = Vec2::ZERO;
    let mut clips = 0usize;
    let (mut l_lower, mut l_upper) = (0.0, 0.0);
    let mut reason = StopReason::Horizon;
    let mut stop_time = 0.0;
    let mut stop_state = x0;
    let mut steps = 0usize;
    let mut obs0 = stop.level.map(|r| r.observable.value(x0));

    for k in 1..=n_steps {
        let (mut disp, h, t_next) = match driver {
            DriverInput::Path(p) => {
                let (ts, vs) = (p.times(), p.values());
                (vs[k] - vs[k - 1], ts[k] - ts[k - 1], ts[k])
            }
            DriverInput::Seeded { dt, .. } => {
                let rng = noise.as_ref().expect("seeded noise");
                let next = driven + standard_increment(rng, (k - 1) as u64) * sd;
                let d = next - driven;
                driven = next;
                (d, dt, k as f64 * dt)
            }
        };
        if !drift.is_none() {
            let (d, clipped) = clip_drift(drift.at(state).map_err(|e| e.at_step(k))?, drift_cap(h));
            clips += clipped as usize;
            disp += d * h;
        }
        let step = one_step_reflect(state, disp, spec).map_err(|e| e.at_step(k))?;
        steps = k;
        l_lower += step.dm_lower;
        l_upper += step.dm_upper;
        let flow = observer.on_step(k, t_next, &step);

        if let (Some(rule), Some(o0)) = (stop.level, obs0) {
            let post = step.post_state;
            let o1 = rule.observable.value(post);
            let oz = rule.observable.value_unprojected(state + disp).unwrap_or(o1);
            let mut hit: Option<(StopReason, f64, Vec2)> = None;
            for (level, reason, sign) in [
                (rule.upper, StopReason::LevelUpper, 1.0),
                (rule.lower, StopReason::LevelLower, -1.0),
            ] {
                let Some(level) = level else { continue };
                let d0 = sign * (level - o0);
                let d1 = sign * (level - o1);
                let candidate = if d1 <= 0.0 || sign * (level - oz) <= 0.0 {
                    let end = if sign * (level - oz) <= 0.0 { oz } else { o1 };
                    let f = if end != o0 { ((level - o0) / (end - o0)).clamp(0.0, 1.0) } else { 1.0 };
                    Some((reason, t + f * h, state + (post - state) * f.min(1.0)))
                } else if rule.bridge && d0 > 0.0 {
                    let s2 = rule.observable.gradient_sq(state);
                    let expo = 2.0 * d0 * d1 / (s2 * h);
                    (expo < 40.0 && bridge_rng.uniform_at(2 * k as u64 + (sign > 0.0) as u64) < (-expo).exp())
                        .then(|| (reason, t + 0.5 * h, state + (post - state) * 0.5))
                } else {
                    None
                };
                if let Some(c) = candidate {
                    if hit.is_none_or(|h0| c.1 < h0.1) {
                        hit = Some(c);
                    }
                }
            }
            obs0 = Some(o1);
            if let Some((r, ts, zs)) = hit {
                reason = r;
                stop_time = ts;
                stop_state = zs;
                break;
            }
        }
        state = step.post_state;
        t = t_next;
        stop_time = t;
        stop_state = state;
        if stop.origin_guard && state.norm() < guard {
            reason = StopReason::OriginGuard;
            break;
        }
        if flow.is_break() {
            reason = StopReason::Observer;
            break;
        }
    }
    let mut flags = Vec::new();
    if steps > 0 && clips as f64 > DEFAULT_CLIP_FLAG_FRACTION * steps as f64 {
        flags.push(format!("drift_clipped={clips}/{steps}"));
    }
    if reason == StopReason::OriginGuard {
        flags.push("origin_guard".into());
    }
    Ok(RunSummary {
        stop_reason: reason,
        stop_time,
        stop_state,
        steps,
        drift_clips: clips,
        l_lower,
        l_upper,
        flags,
    })
}

/// A recorded run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub path: ReflectedPath,
    pub drift: DriftSpec,
    pub summary: RunSummary,
}

struct Recorder<'a> {
    path: ReflectedPath,
    spec: &'a ReflectionSpec,
}

impl StepObserver for Recorder<'_> {
    fn on_step(&mut self, _: usize, t: f64, step: &LcpStep) -> ControlFlow<()> {
        self.path.push_step(t, step, self.spec);
        ControlFlow::Continue(())
    }
}

/// [`run`] with every grid state recorded.
pub fn simulate(
    x0: Vec2,
    spec: &ReflectionSpec,
    drift: &DriftSpec,
    driver: DriverInput<'_>,
    stop: &StopRules,
) -> Result<Trajectory> {
    let capacity = match driver {
        DriverInput::Path(p) => p.len(),
        DriverInput::Seeded { dt, .. } => (step_count(stop.horizon, dt)? as usize + 1).min(1 << 20),
    };
    let mut rec = Recorder {
        path: ReflectedPath::with_start(0.0, x0, spec, capacity),
        spec,
    };
    let summary = run(x0, spec, drift, driver, stop, &mut rec)?;
    Ok(Trajectory {
        path: rec.path,
        drift: *drift,
        summary,
    })
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        let s = &self.summary;
        let mut footer = vec![
            format!("stop_reason={}", s.stop_reason),
            format!("stop_time={}", s.stop_time),
            format!("drift_clips={}", s.drift_clips),
        ];
        footer.extend(s.flags.iter().map(|f| format!("flag={f}")));
        self.path.write_csv(out, preamble, &footer)
    }
}
