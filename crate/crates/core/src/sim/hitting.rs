//! Hitting lower `h`-levels under the h-transform.
//!
//! `h` is homogeneous of degree α and the drift `∇h/h` of degree -1, so the
//! conditioned process is invariant under `z ↦ s z`, `t ↦ s² t`. Taking
//! `s = 2` and `q = 2^α`, the passage from level `b` to `{b/q, bq}` has the
//! same law at every scale. [`renewal_hit`] chains such passages, rescaling
//! the exit point back to level `b` after each one, which keeps the step size
//! proportional to the current scale and turns the infinite-horizon event
//! "ever reach `b/q`" into a walk on scale indices.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{run, DriftSpec, DriverInput, LevelRule, Observable, StopReason, StopRules};
use crate::conformal::MapSpec;
use crate::reflect::ReflectionSpec;
use crate::rng::mix64;
use crate::{Error, Result, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalPlan {
    pub map: MapSpec,
    pub spec: ReflectionSpec,
    /// Step at the reference scale (level 1).
    pub dt: f64,
    /// Give up (count as "never reached") after climbing this many scales.
    pub max_levels: u32,
    /// Per-passage horizon at the reference scale; exceeding it excludes the replica.
    pub passage_horizon: f64,
}

impl RenewalPlan {
    /// Level ratio `q = 2^α` between consecutive scales.
    pub fn level_ratio(&self) -> f64 {
        2f64.powf(self.map.alpha)
    }

    /// Exact shift of the hitting probability caused by the `max_levels`
    /// cutoff: the killed walk hits with `(r - r^{J+1}) / (1 - r^{J+1})`,
    /// `r = 1/q`, instead of `r`.
    pub fn escape_bias(&self) -> f64 {
        let r = 1.0 / self.level_ratio();
        let rj = r.powi(self.max_levels as i32 + 1);
        (r - rj) / (1.0 - rj) - r
    }
}

/// Point on the ridge `αθ = θ1` of the level set `h = level`.
pub fn ridge_point(map: &MapSpec, level: f64) -> Vec2 {
    let th = (map.theta1 / map.alpha).clamp(0.0, FRAC_PI_2);
    Vec2::from_polar(level.powf(1.0 / map.alpha) / (map.alpha * th - map.theta1).cos().powf(1.0 / map.alpha), th)
}

/// One passage from `z` (at the reference scale) to the levels `lower`/`upper`.
pub fn passage(
    z: Vec2,
    map: &MapSpec,
    spec: &ReflectionSpec,
    lower: f64,
    upper: f64,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<(StopReason, Vec2)> {
    let stop = StopRules {
        horizon,
        level: Some(LevelRule {
            observable: Observable::H(*map),
            lower: Some(lower),
            upper: Some(upper),
            bridge: true,
        }),
        origin_guard: true,
    };
    let s = run(
        z,
        spec,
        &DriftSpec::HTransform(*map),
        DriverInput::Seeded { seed, dt },
        &stop,
        (),
    )?;
    Ok((s.stop_reason, s.stop_state))
}

/// Whether the conditioned process started on level 1 ever reaches level
/// `1/q`. `Ok(None)` when a passage hit its horizon or the origin guard.
pub fn renewal_hit(plan: &RenewalPlan, seed: u64) -> Result<Option<bool>> {
    let q = plan.level_ratio();
    let mut z = ridge_point(&plan.map, 1.0);
    let mut level: i64 = 0;
    for passage_index in 0u64.. {
        let s = mix64(seed ^ mix64(passage_index));
        let (reason, end) = passage(
            z,
            &plan.map,
            &plan.spec,
            1.0 / q,
            q,
            plan.dt,
            plan.passage_horizon,
            s,
        )?;
        match reason {
            StopReason::LevelLower => {
                level -= 1;
                if level < 0 {
                    return Ok(Some(true));
                }
                z = end * 2.0;
            }
            StopReason::LevelUpper => {
                level += 1;
                if level >= plan.max_levels as i64 {
                    return Ok(Some(false));
                }
                z = end * 0.5;
            }
            StopReason::Horizon | StopReason::OriginGuard => return Ok(None),
            StopReason::Observer => {
                return Err(Error::Invalid("unexpected observer stop".into()));
            }
        }
    }
    unreachable!()
}

/// `P(reach a before c | start on b) = (a/b)(c - b)/(c - a)` under the h-transform.
pub fn finite_level_law(a: f64, b: f64, c: f64) -> f64 {
    (a / b) * (c - b) / (c - a)
}
