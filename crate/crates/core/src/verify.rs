//! Named verification suites. Each check reports its target, estimate,
//! tolerance and verdict; a suite passes when every check does.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::analytics::{self, StripInterval};
use crate::conformal::MapSpec;
use crate::coupling::run_pair;
use crate::drivers::{brownian_driver, build_cycle_driver, CyclePlan};
use crate::params::{classify, derive, growth_beats_decay, RegimeLabel, WedgeAngles};
use crate::reflect::{lcp_candidates, one_step_reflect, solve_path, Face, ReflectionSpec};
use crate::rng::{CounterRng, Stream};
use crate::sim::hitting::{finite_level_law, passage, renewal_hit, ridge_point, RenewalPlan};
use crate::sim::montecarlo::{column_reports, run_replicas};
use crate::sim::{
    monte_carlo, run, DriftSpec, DriverInput, ExcursionTracker, LevelRule, McConfig, McReport,
    Observable, StopReason, StopRules, WindowSpec,
};
use crate::{Error, Result, Vec2, VERSION};

pub const SUITES: [&str; 11] = [
    "identities",
    "classification",
    "lcp",
    "cycle-factor",
    "exit-law",
    "exit-time",
    "displacement",
    "martingale",
    "hitting-law",
    "kappa-rate",
    "refinement",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceKind {
    Absolute,
    Relative,
    StdErrors,
    /// Boolean property; target and estimate are 1 (true) or 0 (false).
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub target: f64,
    pub estimate: f64,
    pub tolerance: f64,
    pub tolerance_kind: ToleranceKind,
    pub std_error: Option<f64>,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn absolute(name: &str, target: f64, estimate: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            target,
            estimate,
            tolerance: tol,
            tolerance_kind: ToleranceKind::Absolute,
            std_error: None,
            passed: (estimate - target).abs() <= tol,
            detail: String::new(),
        }
    }

    pub fn relative(name: &str, target: f64, estimate: f64, tol: f64) -> Self {
        Check {
            tolerance_kind: ToleranceKind::Relative,
            passed: (estimate - target).abs() <= tol * target.abs(),
            ..Check::absolute(name, target, estimate, tol)
        }
    }

    pub fn std_errors(name: &str, target: f64, report: &McReport, k: f64) -> Self {
        Check {
            tolerance_kind: ToleranceKind::StdErrors,
            std_error: Some(report.std_error),
            passed: (report.estimate - target).abs() <= k * report.std_error,
            ..Check::absolute(name, target, report.estimate, k)
        }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Check {
            tolerance_kind: ToleranceKind::Exact,
            passed: ok,
            ..Check::absolute(name, 1.0, ok as u8 as f64, 0.0)
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn with_std_error(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }

    /// One-line summary.
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let tol = match self.tolerance_kind {
            ToleranceKind::Absolute => format!("abs tol {:.3e}", self.tolerance),
            ToleranceKind::Relative => format!("rel tol {:.3}", self.tolerance),
            ToleranceKind::StdErrors => format!(
                "{} se (se {:.3e})",
                self.tolerance,
                self.std_error.unwrap_or(f64::NAN)
            ),
            ToleranceKind::Exact => "exact".into(),
        };
        let mut s = format!(
            "{verdict} {}: estimate {:.6} target {:.6} ({tol})",
            self.name, self.estimate, self.target
        );
        if !self.detail.is_empty() {
            s.push_str(" [");
            s.push_str(&self.detail);
            s.push(']');
        }
        s
    }
}

/// User overrides; every unset field falls back to the suite default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub dt: Option<f64>,
}

/// Materialized configuration of a suite run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub theta1: f64,
    pub theta2: f64,
    pub seed: u64,
    pub replicas: usize,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub version: String,
    pub config: SuiteConfig,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

/// Default `(θ1, θ2, seed, replicas, dt)` per suite.
pub fn defaults(suite: &str) -> Result<SuiteConfig> {
    let (t1, t2) = (PI / 3.0, -PI / 6.0);
    let cfg = |theta1, theta2, replicas, dt| SuiteConfig {
        theta1,
        theta2,
        seed: 1,
        replicas,
        dt,
    };
    Ok(match suite {
        "identities" => cfg(t1, t2, 10_000, 0.0),
        "classification" => cfg(7.0 * PI / 16.0, -PI / 8.0, 0, 0.0),
        "lcp" => cfg(t1, t2, 100_000, 0.0),
        "cycle-factor" => cfg(3.0 * PI / 8.0 - 0.05, -3.0 * PI / 8.0 + 0.10, 20, 1e-3),
        "exit-law" => cfg(t1, t2, 100_000, 1e-4),
        "exit-time" => cfg(t1, t2, 20_000, 1e-4),
        "displacement" => cfg(t1, t2, 64, 2.5e-5),
        "martingale" => cfg(PI / 3.0, PI / 12.0, 10_000, 1e-4),
        "hitting-law" => cfg(PI / 3.0, PI / 12.0, 4_000, 1e-3),
        "kappa-rate" => cfg(t1, t2, 32, 2.5e-5),
        "refinement" => cfg(PI / 6.0, PI / 6.0, 32, 1e-2),
        other => {
            return Err(Error::Invalid(format!(
                "unknown suite {other:?}; expected one of {}",
                SUITES.join(", ")
            )))
        }
    })
}

pub fn materialize(suite: &str, o: &Overrides) -> Result<SuiteConfig> {
    let d = defaults(suite)?;
    let c = SuiteConfig {
        theta1: o.theta1.unwrap_or(d.theta1),
        theta2: o.theta2.unwrap_or(d.theta2),
        seed: o.seed.unwrap_or(d.seed),
        replicas: o.replicas.unwrap_or(d.replicas),
        dt: o.dt.unwrap_or(d.dt),
    };
    WedgeAngles::new(c.theta1, c.theta2)?;
    if c.dt < 0.0 || !c.dt.is_finite() {
        return Err(Error::Domain {
            what: "dt",
            value: c.dt,
            domain: "(0, inf)",
        });
    }
    Ok(c)
}

pub fn run_suite(suite: &str, overrides: &Overrides) -> Result<SuiteReport> {
    let config = materialize(suite, overrides)?;
    let checks = match suite {
        "identities" => identities(&config)?,
        "classification" => classification(&config)?,
        "lcp" => lcp(&config)?,
        "cycle-factor" => cycle_factor(&config)?,
        "exit-law" => exit_law(&config)?,
        "exit-time" => exit_time(&config)?,
        "displacement" => displacement(&config)?,
        "martingale" => martingale(&config)?,
        "hitting-law" => hitting_law(&config)?,
        "kappa-rate" => kappa_rate(&config)?,
        "refinement" => refinement(&config)?,
        _ => unreachable!("validated by materialize"),
    };
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport {
        suite: suite.into(),
        version: VERSION.into(),
        config,
        checks,
        passed,
    })
}

fn angles(c: &SuiteConfig) -> Result<WedgeAngles> {
    WedgeAngles::new(c.theta1, c.theta2)
}

/// Random admissible pair with `θ1 + θ2` bounded away from 0.
fn random_pair(rng: &mut CounterRng) -> WedgeAngles {
    loop {
        let t1 = rng.next_range(-1.55, 1.55);
        let t2 = rng.next_range(-1.55, 1.55);
        if (t1 + t2).abs() > 1e-3 && (t1.tan() + t2.tan()).abs() > 1e-3 {
            return WedgeAngles { theta1: t1, theta2: t2 };
        }
    }
}

fn identities(c: &SuiteConfig) -> Result<Vec<Check>> {
    let mut rng = CounterRng::new(c.seed, Stream::Aux);
    let n = c.replicas.max(1);
    let (mut rho_err, mut mismatches, mut decomp_err, mut swap_err) = (0f64, 0usize, 0f64, 0f64);
    for _ in 0..n {
        let a = random_pair(&mut rng);
        let p = derive(a)?;
        if p.beta > 0.0 {
            rho_err = rho_err.max((p.rho - p.beta.ln()).abs() / (1.0 + p.rho.abs()));
        }
        let direct = p.psi > 1.0 / p.alpha;
        if p.alpha > 0.0 && direct != growth_beats_decay(&p) {
            // The equivalence needs α > 0 (the inequality flips sign otherwise).
            let margin = (p.psi - 1.0 / p.alpha).abs();
            if margin > 1e-9 * (1.0 + p.psi.abs()) {
                mismatches += 1;
            }
        }
        if a.theta1 + a.theta2 > 0.0 {
            let d = analytics::displacement_decomposition(&a)?;
            let target = analytics::mean_cycle_displacement(&a)?;
            decomp_err = decomp_err.max((d.total - target).abs() / (1.0 + target.abs()));
            let up = analytics::exit_law_up(&a)?;
            swap_err = swap_err.max((analytics::exit_law_down(&a.swapped())? - up).abs() / up);
        }
    }
    let mut sm_err = 0f64;
    for i in 1..10_000 {
        let x = PI * i as f64 / 10_000.0;
        sm_err = sm_err.max((analytics::scale_derivative(x)? * analytics::speed_density(x) - 1.0).abs());
    }
    let a = angles(c)?;
    let map = MapSpec::new(&a)?;
    let lower_img = map.to_wedge(Vec2::new(1.0, 0.0)).arg();
    let upper_img = map.to_wedge(Vec2::new(0.0, 1.0)).arg();
    let edge_err = (lower_img - (FRAC_PI_2 - a.theta1))
        .abs()
        .max((upper_img - (FRAC_PI_2 + a.theta2)).abs());
    let iv = StripInterval::new(&a)?;
    let closed = analytics::exit_law_up(&a)?;
    let legs = analytics::expected_exit_time_legs(&a)?;
    let quad = analytics::expected_exit_time_quadrature(&a, 1e-12)?;
    Ok(vec![
        Check::absolute("rho = log beta (relative)", 0.0, rho_err, 1e-12).with_detail(format!("{n} random pairs")),
        Check::absolute("psi > 1/alpha equivalence mismatches", 0.0, mismatches as f64, 0.0)
            .with_detail(format!("{n} random pairs")),
        Check::absolute("local-time term + E_cycle = 1/kappa", 0.0, decomp_err, 1e-12),
        Check::absolute("S' m = 1", 0.0, sm_err, 1e-12),
        Check::absolute("wedge edge angles", 0.0, edge_err, 1e-15),
        Check::absolute("exit laws swap under angle exchange", 0.0, swap_err, 1e-12),
        Check::absolute("exit_law_up limit form", closed, analytics::exit_law_up_limit_form(&iv), 1e-10),
        Check::absolute("exit_law_up central quotient, delta = 1e-6", closed, analytics::exit_law_up_central(&iv, 1e-6), 1e-10),
        Check::absolute("E_down_to_up by quadrature", legs.down_to_up, quad.down_to_up, 1e-10),
        Check::absolute("E_up_to_down by quadrature", legs.up_to_down, quad.up_to_down, 1e-10),
    ])
}

fn classification(c: &SuiteConfig) -> Result<Vec<Check>> {
    let label = |t1: f64, t2: f64| -> Result<RegimeLabel> { Ok(classify(&derive(WedgeAngles::new(t1, t2)?)?)) };
    let excluded = label(7.0 * PI / 16.0, -PI / 8.0)?;
    let included = label(3.0 * PI / 8.0 - 0.05, -3.0 * PI / 8.0 + 0.10)?;
    let unique = label(PI / 6.0, PI / 6.0)?;
    let alpha = derive(WedgeAngles::new(7.0 * PI / 16.0, -PI / 8.0)?)?.alpha;
    let user = label(c.theta1, c.theta2)?;
    Ok(vec![
        Check::holds("(7pi/16, -pi/8) outside the theorem region", excluded != RegimeLabel::TheoremRegion)
            .with_detail(excluded.as_str()),
        Check::holds("(3pi/8-0.05, -3pi/8+0.10) inside the theorem region", included == RegimeLabel::TheoremRegion)
            .with_detail(included.as_str()),
        Check::holds("(pi/6, pi/6) pathwise unique", unique == RegimeLabel::PathwiseUnique),
        Check::absolute("alpha(7pi/16, -pi/8) = 5/8", 0.625, alpha, 1e-15),
        Check::holds("configured pair classified", true).with_detail(user.as_str()),
    ])
}

fn lcp(c: &SuiteConfig) -> Result<Vec<Check>> {
    let mut rng = CounterRng::new(c.seed, Stream::Aux);
    let mut draws = Vec::new();
    while draws.len() < 20 {
        // Mixed signs, either orientation.
        let t1 = rng.next_range(0.01, 1.55);
        let t2 = -rng.next_range(0.01, 1.55);
        let (t1, t2) = if rng.next_uniform() < 0.5 { (t1, t2) } else { (t2, t1) };
        draws.push(("mixed", t1.tan(), t2.tan()));
    }
    let mut unique_draws = 0;
    while unique_draws < 20 {
        let a1 = rng.next_range(-3.0, 3.0);
        let a2 = rng.next_range(-3.0, 3.0);
        if (a1 * a2).abs() < 1.0 {
            draws.push(("beta<1", a1, a2));
            unique_draws += 1;
        }
    }
    let per_draw = c.replicas.max(1);
    let (mut not_unique, mut max_resid, mut neg) = (0usize, 0f64, 0usize);
    for &(_, a1, a2) in &draws {
        let spec = ReflectionSpec::quadrant(a1, a2)?;
        for _ in 0..per_draw {
            let u = rng.next_uniform();
            let r = rng.next_range(0.0, 1.0);
            let state = if u < 0.25 {
                Vec2::new(r, 0.0)
            } else if u < 0.5 {
                Vec2::new(0.0, r)
            } else if u < 0.6 {
                Vec2::ZERO
            } else {
                Vec2::new(r, rng.next_range(0.0, 1.0))
            };
            let disp = Vec2::new(rng.next_normal(), rng.next_normal()) * 0.3;
            let feasible = lcp_candidates(state, disp, &spec)
                .iter()
                .filter(|cand| cand.is_feasible(1e-10))
                .count();
            if feasible != 1 {
                not_unique += 1;
            }
            let s = one_step_reflect(state, disp, &spec)?;
            if s.dm_lower < 0.0 || s.dm_upper < 0.0 {
                neg += 1;
            }
            let rebuilt = state + disp + s.dm_lower * spec.v_lower + s.dm_upper * spec.v_upper;
            let resid = (rebuilt - s.post_state)
                .norm()
                .max(s.dm_lower * spec.face_distance(Face::Lower, s.post_state).abs())
                .max(s.dm_upper * spec.face_distance(Face::Upper, s.post_state).abs())
                .max((-spec.face_distance(Face::Lower, s.post_state)).max(0.0))
                .max((-spec.face_distance(Face::Upper, s.post_state)).max(0.0));
            max_resid = max_resid.max(resid);
        }
    }
    let total = draws.len() * per_draw;
    Ok(vec![
        Check::absolute("instances without exactly one feasible pattern", 0.0, not_unique as f64, 0.0)
            .with_detail(format!("{total} instances over 20 mixed-sign and 20 beta<1 draws")),
        Check::absolute("max complementarity residual", 0.0, max_resid, 1e-10),
        Check::absolute("negative local-time increments", 0.0, neg as f64, 0.0),
    ])
}

fn cycle_factor(c: &SuiteConfig) -> Result<Vec<Check>> {
    let p = derive(angles(c)?)?;
    let spec = ReflectionSpec::quadrant(p.a1, p.a2)?;
    let plan = CyclePlan {
        cycles: 2,
        dt: if c.dt > 0.0 { c.dt } else { 1e-3 },
        ..CyclePlan::new(0.01)
    };
    let cd = build_cycle_driver(&p, &plan)?;
    let r = run_pair(&cd.driver, cd.first_start, cd.second_start, &spec, &DriftSpec::None)?;
    let stage = |i: usize| r.stages.get(i).map_or(f64::NAN, |s| s.factor);
    let mut checks = vec![
        Check::absolute("upper-face stage factor |a2|", p.a2.abs(), stage(0), 1e-9),
        Check::absolute("lower-face stage factor |a1|", p.a1.abs(), stage(1), 1e-9),
        Check::absolute("cycle factor beta", p.beta, r.cycle_factor().unwrap_or(f64::NAN), 1e-9),
        Check::absolute("two-cycle factor beta^2", p.beta * p.beta, r.cumulative_factor().unwrap_or(f64::NAN), 1e-8),
        Check::holds(
            "alignment orientations",
            r.events
                .iter()
                .filter(|e| e.kind == crate::coupling::EventKind::Perpendicular)
                .all(|e| e.orientation_ok),
        ),
    ];
    // Random theorem-region parameters.
    let mut rng = CounterRng::new(c.seed, Stream::Aux);
    let (mut worst, mut drawn) = (0f64, 0usize);
    while drawn < c.replicas {
        let a = WedgeAngles {
            theta1: rng.next_range(0.3, 1.5),
            theta2: -rng.next_range(0.3, 1.5),
        };
        let Ok(q) = derive(a) else { continue };
        if classify(&q) != RegimeLabel::TheoremRegion {
            continue;
        }
        drawn += 1;
        let spec = ReflectionSpec::quadrant(q.a1, q.a2)?;
        let cd = build_cycle_driver(&q, &CyclePlan::new(0.01))?;
        let r = run_pair(&cd.driver, cd.first_start, cd.second_start, &spec, &DriftSpec::None)?;
        let f = r.cycle_factor().unwrap_or(f64::NAN);
        worst = worst.max((f - q.beta).abs()).max(if f.is_nan() { f64::INFINITY } else { 0.0 });
    }
    checks.push(
        Check::absolute("max |cycle factor - beta| over random theorem-region draws", 0.0, worst, 1e-9)
            .with_detail(format!("{drawn} draws")),
    );
    Ok(checks)
}

fn strip_setup(c: &SuiteConfig) -> Result<(WedgeAngles, ReflectionSpec, StripInterval)> {
    let a = angles(c)?;
    Ok((a, ReflectionSpec::strip(&a)?, StripInterval::new(&a)?))
}

fn vertical_levels(lower: Option<f64>, upper: Option<f64>, horizon: f64) -> StopRules {
    StopRules {
        horizon,
        level: Some(LevelRule {
            observable: Observable::Vertical,
            lower,
            upper,
            bridge: true,
        }),
        origin_guard: false,
    }
}

pub const EXIT_LAW_DELTA: f64 = 0.01;

fn exit_law(c: &SuiteConfig) -> Result<Vec<Check>> {
    let (a, spec, iv) = strip_setup(c)?;
    let delta = EXIT_LAW_DELTA;
    let stop = vertical_levels(Some(iv.a), Some(iv.b), 100.0);
    let x0 = Vec2::new(0.0, iv.a + delta);
    let report = monte_carlo(&McConfig::new(c.replicas, c.seed), |_, seed| {
        let s = run(x0, &spec, &DriftSpec::StripConditioned, DriverInput::Seeded { seed, dt: c.dt }, &stop, ())?;
        Ok(match s.stop_reason {
            StopReason::LevelUpper => Some(1.0 / delta),
            StopReason::LevelLower => Some(0.0),
            _ => None,
        })
    })?;
    let target = analytics::exit_law_up(&a)?;
    let finite = analytics::exit_law_up_quotient(&iv, delta)?;
    Ok(vec![Check::relative("delta^-1 P(hit b before a | a + delta)", target, report.estimate, 0.05)
        .with_std_error(report.std_error)
        .with_detail(format!(
            "n = {}, finite-delta value {finite:.4}, z vs finite-delta {:.2}",
            report.n,
            report.z_score(finite)
        ))])
}

fn exit_time(c: &SuiteConfig) -> Result<Vec<Check>> {
    let (a, spec, iv) = strip_setup(c)?;
    let legs = analytics::expected_exit_time_legs(&a)?;
    let leg = |from: f64, stop: StopRules| -> Result<Vec<Vec<f64>>> {
        let run_ = run_replicas(&McConfig::new(c.replicas, c.seed), |_, seed| {
            let s = run(
                Vec2::new(0.0, from),
                &spec,
                &DriftSpec::StripConditioned,
                DriverInput::Seeded { seed, dt: c.dt },
                &stop,
                (),
            )?;
            Ok(s.stop_reason.is_level_hit().then(|| vec![s.stop_time, s.l_lower, s.l_upper]))
        })?;
        Ok(run_.values)
    };
    let up = column_reports(&leg(iv.a, vertical_levels(None, Some(iv.b), 100.0))?, c.seed)?;
    let down = column_reports(&leg(iv.b, vertical_levels(Some(iv.a), None, 100.0))?, c.seed)?;
    let lt_lower = analytics::mean_leg_local_time_lower(&a)?;
    let lt_upper = analytics::mean_leg_local_time_upper(&a)?;
    Ok(vec![
        Check::relative("E[time lower face -> upper face]", legs.down_to_up, up[0].estimate, 0.05)
            .with_std_error(up[0].std_error),
        Check::relative("E[time upper face -> lower face]", legs.up_to_down, down[0].estimate, 0.05)
            .with_std_error(down[0].std_error),
        Check::relative("E[lower local time per leg] = cos^2 theta1 (tan theta1 + tan theta2)", lt_lower, up[1].estimate, 0.05)
            .with_std_error(up[1].std_error),
        Check::relative("E[upper local time per leg] = cos^2 theta2 (tan theta1 + tan theta2)", lt_upper, down[2].estimate, 0.05)
            .with_std_error(down[2].std_error),
    ])
}

/// Burn-in, in down-to-down cycles, before displacements are recorded.
pub const BURN_IN_CYCLES: usize = 5;

fn displacement(c: &SuiteConfig) -> Result<Vec<Check>> {
    let (a, spec, iv) = strip_setup(c)?;
    let target = analytics::mean_cycle_displacement(&a)?;
    let cycles = 400;
    let horizon = 20.0 * (cycles + BURN_IN_CYCLES) as f64 * analytics::expected_exit_time_legs(&a)?.cycle;
    let x0 = Vec2::new(0.0, 0.5 * (iv.a + iv.b));
    let report = monte_carlo(&McConfig::new(c.replicas, c.seed), |_, seed| {
        let mut tr = ExcursionTracker::new(spec, crate::reflect::FACE_TOL).with_max_cycles(cycles + BURN_IN_CYCLES);
        tr.start(x0);
        run(x0, &spec, &DriftSpec::StripConditioned, DriverInput::Seeded { seed, dt: c.dt }, &StopRules::horizon(horizon), &mut tr)?;
        let d = &tr.stats().displacements;
        if d.len() < cycles + BURN_IN_CYCLES {
            return Ok(None);
        }
        let kept = &d[BURN_IN_CYCLES..];
        Ok(Some(kept.iter().sum::<f64>() / kept.len() as f64))
    })?;
    Ok(vec![Check::relative("mean horizontal displacement per cycle = 1/kappa", target, report.estimate, 0.05)
        .with_std_error(report.std_error)
        .with_detail(format!("{} replicas x {cycles} cycles after {BURN_IN_CYCLES}-cycle burn-in", report.n))])
}

pub const MARTINGALE_LEVELS: (f64, f64, f64) = (0.35, 0.5, 0.7);

fn martingale(c: &SuiteConfig) -> Result<Vec<Check>> {
    let a = angles(c)?;
    let map = MapSpec::new(&a)?;
    let spec = ReflectionSpec::quadrant_from_angles(&a)?;
    let (lo, h0, hi) = MARTINGALE_LEVELS;
    let x0 = ridge_point(&map, h0);
    let stop = StopRules {
        horizon: 1e3,
        level: Some(LevelRule {
            observable: Observable::H(map),
            lower: Some(lo),
            upper: Some(hi),
            bridge: true,
        }),
        origin_guard: false,
    };
    let report = monte_carlo(&McConfig::new(c.replicas, c.seed), |_, seed| {
        let s = run(x0, &spec, &DriftSpec::None, DriverInput::Seeded { seed, dt: c.dt }, &stop, ())?;
        Ok(match s.stop_reason {
            StopReason::LevelLower => Some(lo),
            StopReason::LevelUpper => Some(hi),
            _ => None,
        })
    })?;
    Ok(vec![Check::std_errors("E[h(X) at exit of {lo < h < hi}] = h(x0)", map.h_value(x0), &report, 4.0)
        .with_detail(format!("levels {lo}, {hi}; n = {}", report.n))])
}

fn hitting_law(c: &SuiteConfig) -> Result<Vec<Check>> {
    let a = angles(c)?;
    let map = MapSpec::new(&a)?;
    let spec = ReflectionSpec::quadrant_from_angles(&a)?;
    let q = 2f64.powf(map.alpha);
    // Cutoff so that the killed-walk bias is below 1e-6.
    let max_levels = ((1e-6f64).ln() / (1.0 / q).ln()).ceil() as u32;
    let plan = RenewalPlan {
        map,
        spec,
        dt: c.dt,
        max_levels,
        passage_horizon: 200.0,
    };
    let renewal = monte_carlo(&McConfig::new(c.replicas, c.seed), |_, seed| {
        Ok(renewal_hit(&plan, seed)?.map(|hit| hit as u8 as f64))
    })?;
    let start = ridge_point(&map, 1.0);
    let single = monte_carlo(&McConfig::new(c.replicas, c.seed ^ 0x5eed), |_, seed| {
        let (reason, _) = passage(start, &map, &spec, 1.0 / q, q, c.dt, plan.passage_horizon, seed)?;
        Ok(match reason {
            StopReason::LevelLower => Some(1.0),
            StopReason::LevelUpper => Some(0.0),
            _ => None,
        })
    })?;
    Ok(vec![
        Check::std_errors("P^h(reach level a from level b) = a/b", 1.0 / q, &renewal, 4.0).with_detail(format!(
            "b = 1, a = 1/q, q = 2^alpha = {q:.4}; scale walk cut at {max_levels} levels (bias {:.1e}); n = {}",
            plan.escape_bias(),
            renewal.n
        )),
        Check::std_errors("P^h(reach a before c from b) = (a/b)(c-b)/(c-a)", finite_level_law(1.0 / q, 1.0, q), &single, 4.0)
            .with_detail(format!("a = 1/q, b = 1, c = q; n = {}", single.n)),
    ])
}

fn kappa_rate(c: &SuiteConfig) -> Result<Vec<Check>> {
    let (a, spec, iv) = strip_setup(c)?;
    let kappa = derive(a)?.kappa;
    // Excursions straddling a window edge are missing from N^d, a bias of
    // order 1/width; wide windows keep it small.
    let (windows, width) = (20usize, 5.0);
    let burn = 5.0;
    let x0 = Vec2::new(0.0, 0.5 * (iv.a + iv.b));
    let start = Observable::LogScale.value(x0) + burn;
    let horizon = 50.0 * (windows as f64 * width + burn);
    let run_ = run_replicas(&McConfig::new(c.replicas, c.seed), |_, seed| {
        let mut tr = ExcursionTracker::new(spec, crate::reflect::FACE_TOL).with_windows(WindowSpec {
            observable: Observable::LogScale,
            start,
            width,
            count: windows,
        });
        tr.start(x0);
        run(x0, &spec, &DriftSpec::StripConditioned, DriverInput::Seeded { seed, dt: c.dt }, &StopRules::horizon(horizon), &mut tr)?;
        let s = tr.stats();
        if s.window_starts.len() <= windows {
            return Ok(None);
        }
        let nd: u32 = s.n_d.iter().sum();
        let nbig: u32 = s.n_big_d.iter().sum();
        let ok = s.n_d.iter().zip(&s.n_big_d).all(|(d, big)| d <= big && *big <= d + 1);
        let progress = windows as f64 * width;
        Ok(Some(vec![nd as f64 / progress, nbig as f64 / progress, ok as u8 as f64]))
    })?;
    let reports = column_reports(&run_.values, c.seed)?;
    let all_ok = run_.values.iter().all(|v| v[2] == 1.0);
    Ok(vec![
        Check::relative("N^d per unit log-scale progress = kappa", kappa, reports[0].estimate, 0.10)
            .with_std_error(reports[0].std_error)
            .with_detail(format!("{} replicas x {windows} windows of width {width}", reports[0].n)),
        Check::relative("N^D per unit log-scale progress = kappa", kappa, reports[1].estimate, 0.10)
            .with_std_error(reports[1].std_error),
        Check::holds("N^d <= N^D <= N^d + 1 in every window", all_ok),
    ])
}

fn refinement(c: &SuiteConfig) -> Result<Vec<Check>> {
    let a = angles(c)?;
    let p = derive(a)?;
    let spec = ReflectionSpec::quadrant(p.a1, p.a2)?;
    let x0 = Vec2::new(0.5, 0.5);
    let levels = 4;
    let fine_factor = 1usize << (levels - 1);
    let seeds = c.replicas.max(2);
    let run_ = run_replicas(&McConfig::new(seeds, c.seed), |_, seed| {
        let fine = brownian_driver(seed, 1.0, c.dt / fine_factor as f64)?;
        let paths: Vec<_> = (0..levels)
            .map(|j| solve_path(&fine.subsample(fine_factor >> j)?, x0, &spec))
            .collect::<Result<_>>()?;
        // Compare on the coarse grid.
        let d: Vec<f64> = (0..levels - 1)
            .map(|j| {
                let (coarse, finer) = (&paths[j], &paths[j + 1]);
                (0..coarse.len())
                    .map(|k| (coarse.states[k] - finer.states[2 * k]).norm())
                    .fold(0.0, f64::max)
            })
            .collect();
        Ok(Some(d))
    })?;
    let means = column_reports(&run_.values, c.seed)?;
    let (d1, d2, d3) = (means[0].estimate, means[1].estimate, means[2].estimate);
    let detail = format!("mean sup-distances {d1:.4e}, {d2:.4e}, {d3:.4e} over {seeds} drivers");
    // Identical starts give identical coupled paths in every regime.
    let mut identical = true;
    for (t1, t2) in [(PI / 6.0, PI / 6.0), (3.0 * PI / 8.0 - 0.05, -3.0 * PI / 8.0 + 0.10), (-0.4, 1.2), (7.0 * PI / 16.0, -PI / 8.0)] {
        let q = derive(WedgeAngles::new(t1, t2)?)?;
        let spec = ReflectionSpec::quadrant(q.a1, q.a2)?;
        let d = brownian_driver(c.seed, 1.0, 1e-3)?;
        let start = Vec2::new(0.05, 0.02);
        let r = run_pair(&d, start, start, &spec, &DriftSpec::None)?;
        identical &= r.first.states == r.second.states
            && r.first.l_lower == r.second.l_lower
            && r.first.l_upper == r.second.l_upper;
    }
    Ok(vec![
        Check::holds("sup-distance decreases: dt/2 vs dt/4 below dt vs dt/2", d2 < d1).with_detail(detail.clone()),
        Check::holds("sup-distance decreases: dt/4 vs dt/8 below dt/2 vs dt/4", d3 < d2).with_detail(detail),
        Check::holds("identical starts give bitwise identical coupled paths", identical),
    ])
}
