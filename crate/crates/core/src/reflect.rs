//! Discretized Skorokhod map.
//!
//! Each grid step solves the two-face linear complementarity problem
//!
//! ```text
//! post = pre + displacement + dm_lower * v_lower + dm_upper * v_upper
//! dm_lower, dm_upper >= 0,   n_lower(post), n_upper(post) >= 0,
//! dm_lower * n_lower(post) = 0,   dm_upper * n_upper(post) = 0
//! ```
//!
//! where `n_face` is the inward normal distance to a face. Writing
//! `G[i][j] = N_i · v_j` (unit diagonal), the problem has a unique solution
//! whenever `G` is a P-matrix; we enumerate the four activity patterns and
//! solve each in closed form.

use std::f64::consts::FRAC_PI_2;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::drivers::DrivingPath;
use crate::params::WedgeAngles;
use crate::{Error, Result, Vec2};

/// Classification tolerance for "on the face" in invariant checks.
pub const FACE_TOL: f64 = 1e-12;

/// Relative slack allowed before a step is declared infeasible.
const FEASIBILITY_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// `{x >= 0, y >= 0}`; lower face `y = 0`, upper face `x = 0`.
    Quadrant,
    /// `{y_lo <= y <= y_hi}`; lower face `y = y_lo`, upper face `y = y_hi`.
    Strip { y_lo: f64, y_hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectionSpec {
    pub domain: Domain,
    pub v_lower: Vec2,
    pub v_upper: Vec2,
}

impl ReflectionSpec {
    /// Quadrant with push `(-a1, 1)` on `y = 0` and `(1, -a2)` on `x = 0`.
    ///
    /// Rejects matrices that are not completely-S (`a1, a2 > 0` with `a1 a2 >= 1`)
    /// and those whose one-step problem is not a P-matrix (`a1 a2 >= 1`).
    pub fn quadrant(a1: f64, a2: f64) -> Result<Self> {
        if !(a1.is_finite() && a2.is_finite()) {
            return Err(Error::Invalid(format!("non-finite tangents {a1}, {a2}")));
        }
        if a1 > 0.0 && a2 > 0.0 && a1 * a2 >= 1.0 {
            return Err(Error::NotCompletelyS { a1, a2 });
        }
        if a1 * a2 >= 1.0 {
            return Err(Error::NotPMatrix { a1, a2 });
        }
        Ok(ReflectionSpec {
            domain: Domain::Quadrant,
            v_lower: Vec2::new(-a1, 1.0),
            v_upper: Vec2::new(1.0, -a2),
        })
    }

    pub fn quadrant_from_angles(angles: &WedgeAngles) -> Result<Self> {
        Self::quadrant(angles.a1(), angles.a2())
    }

    /// Strip `π/2 - θ1 <= y <= π/2 + θ2` with push `(-tan θ1, 1)` on the lower
    /// face and `(-tan θ2, -1)` on the upper face.
    pub fn strip(angles: &WedgeAngles) -> Result<Self> {
        let y_lo = FRAC_PI_2 - angles.theta1;
        let y_hi = FRAC_PI_2 + angles.theta2;
        Self::strip_with(y_lo, y_hi, angles.a1(), angles.a2())
    }

    pub fn strip_with(y_lo: f64, y_hi: f64, tan_lower: f64, tan_upper: f64) -> Result<Self> {
        if !(y_lo.is_finite() && y_hi.is_finite()) || y_lo >= y_hi {
            return Err(Error::Invalid(format!("empty strip [{y_lo}, {y_hi}]")));
        }
        Ok(ReflectionSpec {
            domain: Domain::Strip { y_lo, y_hi },
            v_lower: Vec2::new(-tan_lower, 1.0),
            v_upper: Vec2::new(-tan_upper, -1.0),
        })
    }

    /// Inward normal distance of `p` to `face` (negative outside).
    #[inline]
    pub fn face_distance(&self, face: Face, p: Vec2) -> f64 {
        match (self.domain, face) {
            (Domain::Quadrant, Face::Lower) => p.y,
            (Domain::Quadrant, Face::Upper) => p.x,
            (Domain::Strip { y_lo, .. }, Face::Lower) => p.y - y_lo,
            (Domain::Strip { y_hi, .. }, Face::Upper) => y_hi - p.y,
        }
    }

    /// Unit inward normal of a face.
    pub fn normal(&self, face: Face) -> Vec2 {
        match (self.domain, face) {
            (Domain::Quadrant, Face::Lower) => Vec2::new(0.0, 1.0),
            (Domain::Quadrant, Face::Upper) => Vec2::new(1.0, 0.0),
            (Domain::Strip { .. }, Face::Lower) => Vec2::new(0.0, 1.0),
            (Domain::Strip { .. }, Face::Upper) => Vec2::new(0.0, -1.0),
        }
    }

    pub fn push(&self, face: Face) -> Vec2 {
        match face {
            Face::Lower => self.v_lower,
            Face::Upper => self.v_upper,
        }
    }

    #[inline]
    fn snap(&self, face: Face, p: &mut Vec2) {
        match (self.domain, face) {
            (Domain::Quadrant, Face::Lower) => p.y = 0.0,
            (Domain::Quadrant, Face::Upper) => p.x = 0.0,
            (Domain::Strip { y_lo, .. }, Face::Lower) => p.y = y_lo,
            (Domain::Strip { y_hi, .. }, Face::Upper) => p.y = y_hi,
        }
    }

    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        p.is_finite()
            && self.face_distance(Face::Lower, p) >= -tol
            && self.face_distance(Face::Upper, p) >= -tol
    }

    pub fn on_face(&self, face: Face, p: Vec2, tol: f64) -> bool {
        self.face_distance(face, p).abs() <= tol
    }

    /// `G[i][j] = N_i · v_j`, rows and columns ordered (lower, upper).
    pub fn gram(&self) -> [[f64; 2]; 2] {
        let nl = self.normal(Face::Lower);
        let nu = self.normal(Face::Upper);
        [
            [nl.dot(self.v_lower), nl.dot(self.v_upper)],
            [nu.dot(self.v_lower), nu.dot(self.v_upper)],
        ]
    }

    /// Scale the geometry by `c > 0` (quadrant is invariant; strip bounds scale).
    pub fn scaled(&self, c: f64) -> Self {
        let domain = match self.domain {
            Domain::Quadrant => Domain::Quadrant,
            Domain::Strip { y_lo, y_hi } => Domain::Strip {
                y_lo: c * y_lo,
                y_hi: c * y_hi,
            },
        };
        ReflectionSpec { domain, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Interior,
    LowerOnly,
    UpperOnly,
    Corner,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [
        Pattern::Interior,
        Pattern::LowerOnly,
        Pattern::UpperOnly,
        Pattern::Corner,
    ];

    pub fn lower_active(self) -> bool {
        matches!(self, Pattern::LowerOnly | Pattern::Corner)
    }

    pub fn upper_active(self) -> bool {
        matches!(self, Pattern::UpperOnly | Pattern::Corner)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcpStep {
    pub pre_state: Vec2,
    pub displacement: Vec2,
    pub post_state: Vec2,
    pub dm_lower: f64,
    pub dm_upper: f64,
    pub pattern: Pattern,
}

/// One activity pattern's closed-form solution and how badly it violates the
/// complementarity conditions (0 when feasible).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub pattern: Pattern,
    pub dm_lower: f64,
    pub dm_upper: f64,
    /// Inward distances of the unprojected post-state to (lower, upper) faces.
    pub residuals: (f64, f64),
    pub violation: f64,
}

impl Candidate {
    /// Feasible with strictly positive active increments and inactive residuals
    /// no worse than `-tol`.
    pub fn is_feasible(&self, tol: f64) -> bool {
        let (rl, ru) = self.residuals;
        let lower_ok = if self.pattern.lower_active() {
            self.dm_lower > 0.0
        } else {
            rl >= -tol
        };
        let upper_ok = if self.pattern.upper_active() {
            self.dm_upper > 0.0
        } else {
            ru >= -tol
        };
        lower_ok && upper_ok
    }
}

/// Evaluate all four activity patterns for one step.
pub fn lcp_candidates(state: Vec2, displacement: Vec2, spec: &ReflectionSpec) -> [Candidate; 4] {
    let z = state + displacement;
    let ql = spec.face_distance(Face::Lower, z);
    let qu = spec.face_distance(Face::Upper, z);
    let g = spec.gram();
    let make = |pattern: Pattern, dl: f64, du: f64| {
        let rl = ql + g[0][0] * dl + g[0][1] * du;
        let ru = qu + g[1][0] * dl + g[1][1] * du;
        let neg = |v: f64| if v.is_nan() { f64::INFINITY } else { (-v).max(0.0) };
        let mut violation: f64 = 0.0;
        violation = violation.max(if pattern.lower_active() { neg(dl) } else { neg(rl) });
        violation = violation.max(if pattern.upper_active() { neg(du) } else { neg(ru) });
        Candidate {
            pattern,
            dm_lower: dl,
            dm_upper: du,
            residuals: (rl, ru),
            violation,
        }
    };
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let corner = if det.abs() > 1e-14 {
        let dl = (-ql * g[1][1] + g[0][1] * qu) / det;
        let du = (-qu * g[0][0] + g[1][0] * ql) / det;
        make(Pattern::Corner, dl, du)
    } else {
        Candidate {
            pattern: Pattern::Corner,
            dm_lower: f64::NAN,
            dm_upper: f64::NAN,
            residuals: (f64::NAN, f64::NAN),
            violation: f64::INFINITY,
        }
    };
    [
        make(Pattern::Interior, 0.0, 0.0),
        make(Pattern::LowerOnly, -ql / g[0][0], 0.0),
        make(Pattern::UpperOnly, 0.0, -qu / g[1][1]),
        corner,
    ]
}

/// Resolve one grid step of the Skorokhod map.
pub fn one_step_reflect(
    state: Vec2,
    displacement: Vec2,
    spec: &ReflectionSpec,
) -> Result<LcpStep> {
    let cands = lcp_candidates(state, displacement, spec);
    let chosen = match cands.iter().find(|c| c.violation == 0.0 && c.is_feasible(0.0)) {
        Some(c) => *c,
        None => {
            // Rounding can leave every pattern infeasible by a hair near a tie.
            let best = cands
                .iter()
                .min_by(|a, b| a.violation.total_cmp(&b.violation))
                .copied()
                .expect("four candidates");
            let z = state + displacement;
            let slack = FEASIBILITY_SLACK * (1.0 + z.norm());
            if !(best.violation <= slack) {
                return Err(Error::NoFeasiblePattern {
                    state,
                    displacement,
                    violations: cands.map(|c| c.violation),
                });
            }
            Candidate {
                dm_lower: best.dm_lower.max(0.0),
                dm_upper: best.dm_upper.max(0.0),
                ..best
            }
        }
    };
    let mut post = state
        + displacement
        + chosen.dm_lower * spec.v_lower
        + chosen.dm_upper * spec.v_upper;
    for (face, active) in [
        (Face::Lower, chosen.pattern.lower_active()),
        (Face::Upper, chosen.pattern.upper_active()),
    ] {
        if active || spec.face_distance(face, post) < 0.0 {
            spec.snap(face, &mut post);
        }
    }
    Ok(LcpStep {
        pre_state: state,
        displacement,
        post_state: post,
        dm_lower: chosen.dm_lower,
        dm_upper: chosen.dm_upper,
        pattern: chosen.pattern,
    })
}

/// Reflected states on a time grid with per-face cumulative local times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectedPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec2>,
    pub l_lower: Vec<f64>,
    pub l_upper: Vec<f64>,
    /// State indices lying on the lower face.
    pub lower_events: Vec<usize>,
    /// State indices lying on the upper face.
    pub upper_events: Vec<usize>,
}

impl ReflectedPath {
    pub fn with_start(t0: f64, x0: Vec2, spec: &ReflectionSpec, capacity: usize) -> Self {
        let mut p = ReflectedPath {
            times: Vec::with_capacity(capacity),
            states: Vec::with_capacity(capacity),
            l_lower: Vec::with_capacity(capacity),
            l_upper: Vec::with_capacity(capacity),
            lower_events: Vec::new(),
            upper_events: Vec::new(),
        };
        p.push_state(t0, x0, 0.0, 0.0, spec);
        p
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn push_state(&mut self, t: f64, x: Vec2, dl: f64, du: f64, spec: &ReflectionSpec) {
        let k = self.states.len();
        let (ll, lu) = match (self.l_lower.last(), self.l_upper.last()) {
            (Some(&a), Some(&b)) => (a + dl, b + du),
            _ => (dl, du),
        };
        self.times.push(t);
        self.states.push(x);
        self.l_lower.push(ll);
        self.l_upper.push(lu);
        if spec.face_distance(Face::Lower, x) == 0.0 {
            self.lower_events.push(k);
        }
        if spec.face_distance(Face::Upper, x) == 0.0 {
            self.upper_events.push(k);
        }
    }

    pub fn push_step(&mut self, t: f64, step: &LcpStep, spec: &ReflectionSpec) {
        self.push_state(t, step.post_state, step.dm_lower, step.dm_upper, spec);
    }

    pub const CSV_HEADER: [&'static str; 5] = ["t", "x", "y", "l_lower", "l_upper"];

    pub fn write_csv<W: Write>(&self, out: W, preamble: &[String], footer: &[String]) -> Result<()> {
        csvio::write_table(
            out,
            preamble,
            &Self::CSV_HEADER,
            (0..self.len()).map(|k| {
                vec![
                    self.times[k],
                    self.states[k].x,
                    self.states[k].y,
                    self.l_lower[k],
                    self.l_upper[k],
                ]
            }),
            footer,
        )
    }

    /// Read a path back; contact events are recomputed against `spec`.
    pub fn read_csv<R: Read>(input: R, spec: &ReflectionSpec) -> Result<(Self, Vec<String>)> {
        let (rows, comments) = csvio::read_table(input, &Self::CSV_HEADER)?;
        let mut p = ReflectedPath {
            times: Vec::new(),
            states: Vec::new(),
            l_lower: Vec::new(),
            l_upper: Vec::new(),
            lower_events: Vec::new(),
            upper_events: Vec::new(),
        };
        for (k, r) in rows.iter().enumerate() {
            let x = Vec2::new(r[1], r[2]);
            p.times.push(r[0]);
            p.states.push(x);
            p.l_lower.push(r[3]);
            p.l_upper.push(r[4]);
            if spec.face_distance(Face::Lower, x) == 0.0 {
                p.lower_events.push(k);
            }
            if spec.face_distance(Face::Upper, x) == 0.0 {
                p.upper_events.push(k);
            }
        }
        Ok((p, comments))
    }
}

/// Apply the Skorokhod map to a driving path.
pub fn solve_path(driver: &DrivingPath, x0: Vec2, spec: &ReflectionSpec) -> Result<ReflectedPath> {
    if !spec.contains(x0, 0.0) {
        return Err(Error::OutsideDomain { point: x0 });
    }
    driver.validate()?;
    let values = driver.values();
    let times = driver.times();
    let mut path = ReflectedPath::with_start(times[0], x0, spec, values.len());
    let mut state = x0;
    for k in 1..values.len() {
        let step = one_step_reflect(state, values[k] - values[k - 1], spec)
            .map_err(|e| e.at_step(k))?;
        path.push_step(times[k], &step, spec);
        state = step.post_state;
    }
    Ok(path)
}

/// `max over windows [t1, t2]` of `(osc g + osc M) / osc f`, where `osc` is
/// the largest Euclidean increment inside the window, `g` the reflected
/// path, `M = (l_lower, l_upper)` and `f` the driver. Windows on which the
/// driver does not move are skipped; returns 0 if every window is skipped.
pub fn oscillation_ratio(driver: &DrivingPath, path: &ReflectedPath) -> Result<f64> {
    let f = driver.values();
    if f.len() != path.len() {
        return Err(Error::Invalid(format!(
            "driver has {} values but path has {} states",
            f.len(),
            path.len()
        )));
    }
    let g = &path.states;
    let m: Vec<Vec2> = path
        .l_lower
        .iter()
        .zip(&path.l_upper)
        .map(|(&a, &b)| Vec2::new(a, b))
        .collect();
    let n = f.len();
    // diam[i] holds the window diameter over [i, j - 1] for the three series.
    let mut diam_f = vec![0.0f64; n];
    let mut diam_g = vec![0.0f64; n];
    let mut diam_m = vec![0.0f64; n];
    let mut best = 0.0f64;
    for j in 1..n {
        let (mut rf, mut rg, mut rm) = (0.0f64, 0.0f64, 0.0f64);
        for i in (0..j).rev() {
            rf = rf.max((f[j] - f[i]).norm());
            rg = rg.max((g[j] - g[i]).norm());
            rm = rm.max((m[j] - m[i]).norm());
            diam_f[i] = diam_f[i].max(rf);
            diam_g[i] = diam_g[i].max(rg);
            diam_m[i] = diam_m[i].max(rm);
            if diam_f[i] > 0.0 {
                best = best.max((diam_g[i] + diam_m[i]) / diam_f[i]);
            }
        }
    }
    Ok(best)
}
