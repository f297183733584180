//! Quadrant → wedge → strip maps.
//!
//! `F(z) = e^{i(π/2 - θ1)} z^α` sends the quadrant onto the wedge between
//! the rays at angles `π/2 - θ1` (image of the lower face) and `π/2 + θ2`
//! (image of the upper face); `log` then sends the wedge onto the horizontal
//! strip `π/2 - θ1 <= y <= π/2 + θ2`. The harmonic function
//! `h = Im F = r^α cos(αθ - θ1)` is positive on the quadrant minus the origin.

use std::f64::consts::FRAC_PI_2;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::params::WedgeAngles;
use crate::reflect::ReflectedPath;
use crate::{Error, Result, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub theta1: f64,
    pub theta2: f64,
    pub alpha: f64,
}

impl MapSpec {
    /// Requires a positive opening (`θ1 + θ2 > 0`).
    pub fn new(angles: &WedgeAngles) -> Result<Self> {
        let alpha = angles.alpha();
        if !(alpha > 0.0) {
            return Err(Error::DegenerateAngles {
                theta1: angles.theta1,
                theta2: angles.theta2,
                reason: "the wedge map needs theta1 + theta2 > 0",
            });
        }
        Ok(MapSpec {
            theta1: angles.theta1,
            theta2: angles.theta2,
            alpha,
        })
    }

    /// Polar angle of the image of the lower face.
    pub fn lower_edge_angle(&self) -> f64 {
        FRAC_PI_2 - self.theta1
    }

    /// Polar angle of the image of the upper face.
    pub fn upper_edge_angle(&self) -> f64 {
        self.lower_edge_angle() + self.alpha * FRAC_PI_2
    }

    /// Strip bounds `(π/2 - θ1, π/2 + θ2)`.
    pub fn strip_bounds(&self) -> (f64, f64) {
        (FRAC_PI_2 - self.theta1, FRAC_PI_2 + self.theta2)
    }

    /// `F(z)`. The origin maps to itself.
    pub fn to_wedge(&self, z: Vec2) -> Vec2 {
        if z == Vec2::ZERO {
            return Vec2::ZERO;
        }
        let (r, th) = (z.norm(), quadrant_arg(z));
        Vec2::from_polar(r.powf(self.alpha), self.alpha * th + self.lower_edge_angle())
    }

    /// Inverse of [`MapSpec::to_wedge`] on the closed wedge.
    pub fn from_wedge(&self, w: Vec2) -> Vec2 {
        if w == Vec2::ZERO {
            return Vec2::ZERO;
        }
        let th = ((w.arg() - self.lower_edge_angle()) / self.alpha).clamp(0.0, FRAC_PI_2);
        let r = w.norm().powf(1.0 / self.alpha);
        quadrant_point(r, th)
    }

    /// `log F(z)`: real part `α log r`, imaginary part the wedge angle.
    pub fn to_strip(&self, z: Vec2) -> Result<Vec2> {
        if z == Vec2::ZERO {
            return Err(Error::OutsideDomain { point: z });
        }
        Ok(Vec2::new(
            self.alpha * z.norm().ln(),
            self.alpha * quadrant_arg(z) + self.lower_edge_angle(),
        ))
    }

    pub fn from_strip(&self, s: Vec2) -> Vec2 {
        let th = ((s.y - self.lower_edge_angle()) / self.alpha).clamp(0.0, FRAC_PI_2);
        quadrant_point((s.x / self.alpha).exp(), th)
    }

    /// `h(z) = r^α cos(αθ - θ1)`.
    #[inline]
    pub fn h_value(&self, z: Vec2) -> f64 {
        if z == Vec2::ZERO {
            return 0.0;
        }
        z.norm().powf(self.alpha) * (self.alpha * quadrant_arg(z) - self.theta1).cos()
    }

    /// `∇h = α r^{α-1} (cos((α-1)θ - θ1), -sin((α-1)θ - θ1))`.
    #[inline]
    pub fn h_gradient(&self, z: Vec2) -> Result<Vec2> {
        if z == Vec2::ZERO {
            return Err(Error::OutsideDomain { point: z });
        }
        let (r, th) = (z.norm(), quadrant_arg(z));
        let phase = (self.alpha - 1.0) * th - self.theta1;
        let m = self.alpha * r.powf(self.alpha - 1.0);
        Ok(Vec2::new(m * phase.cos(), -m * phase.sin()))
    }

    /// `∇h / h = α (cos((α-1)θ - θ1), -sin((α-1)θ - θ1)) / (r cos(αθ - θ1))`,
    /// the h-transform drift.
    #[inline]
    pub fn log_h_gradient(&self, z: Vec2) -> Result<Vec2> {
        if z == Vec2::ZERO {
            return Err(Error::OutsideDomain { point: z });
        }
        let (r, th) = (z.norm(), quadrant_arg(z));
        let phase = (self.alpha - 1.0) * th - self.theta1;
        let scale = self.alpha / (r * (self.alpha * th - self.theta1).cos());
        Ok(Vec2::new(scale * phase.cos(), -scale * phase.sin()))
    }

    /// `|F'(z)| = α r^{α-1}`.
    #[inline]
    pub fn derivative_modulus(&self, z: Vec2) -> f64 {
        self.alpha * z.norm().powf(self.alpha - 1.0)
    }

    /// Sharp constant `c` in `|∇h| / h <= c / |z|`: `α / min(cos θ1, cos θ2)`.
    pub fn gradient_ratio_constant(&self) -> f64 {
        self.alpha / self.theta1.cos().min(self.theta2.cos())
    }
}

/// Polar angle of a quadrant point in `[0, π/2]`.
#[inline]
fn quadrant_arg(z: Vec2) -> f64 {
    z.y.max(0.0).atan2(z.x.max(0.0))
}

/// Polar point with exact zeros on the two axes.
fn quadrant_point(r: f64, th: f64) -> Vec2 {
    if th == 0.0 {
        Vec2::new(r, 0.0)
    } else if th == FRAC_PI_2 {
        Vec2::new(0.0, r)
    } else {
        Vec2::from_polar(r, th)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Wedge,
    Strip,
}

/// A mapped trajectory with both clocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportedPath {
    pub target: Target,
    pub t_original: Vec<f64>,
    pub t_new: Vec<f64>,
    pub states: Vec<Vec2>,
}

/// Map a quadrant trajectory to the wedge (clock `∫|F'|² ds`) or the strip
/// (clock `∫|F'|²/|F|² ds`), accumulated by the trapezoid rule.
///
/// Fails at the first state closer than `guard` to the origin or outside the
/// closed quadrant.
pub fn transport(
    path: &ReflectedPath,
    map: &MapSpec,
    target: Target,
    guard: f64,
) -> Result<TransportedPath> {
    let n = path.len();
    let mut states = Vec::with_capacity(n);
    let mut rates = Vec::with_capacity(n);
    for (k, &z) in path.states.iter().enumerate() {
        if !(z.x >= 0.0 && z.y >= 0.0) {
            return Err(Error::OutsideDomain { point: z }.at_step(k));
        }
        if z.norm() <= guard || z == Vec2::ZERO {
            return Err(Error::OriginGuard { index: k });
        }
        let d2 = map.derivative_modulus(z).powi(2);
        match target {
            Target::Wedge => {
                states.push(map.to_wedge(z));
                rates.push(d2);
            }
            Target::Strip => {
                states.push(map.to_strip(z)?);
                rates.push(d2 / map.to_wedge(z).norm_sq());
            }
        }
    }
    let mut t_new = Vec::with_capacity(n);
    let mut clock = 0.0;
    t_new.push(clock);
    for k in 1..n {
        clock += 0.5 * (rates[k] + rates[k - 1]) * (path.times[k] - path.times[k - 1]);
        t_new.push(clock);
    }
    Ok(TransportedPath {
        target,
        t_original: path.times.clone(),
        t_new,
        states,
    })
}

impl TransportedPath {
    /// Linear interpolation of states on the uniform grid `0, dt, 2dt, ...`
    /// of the new clock. Approximate: interpolated states are not on the path.
    pub fn resample(&self, dt: f64) -> Result<(Vec<f64>, Vec<Vec2>)> {
        if !(dt > 0.0) {
            return Err(Error::Domain {
                what: "dt",
                value: dt,
                domain: "(0, inf)",
            });
        }
        let end = *self.t_new.last().unwrap_or(&0.0);
        let mut ts = Vec::new();
        let mut xs = Vec::new();
        let mut j = 0;
        let mut k = 0u64;
        loop {
            let t = k as f64 * dt;
            if t > end {
                break;
            }
            while j + 1 < self.t_new.len() && self.t_new[j + 1] < t {
                j += 1;
            }
            let x = if j + 1 >= self.t_new.len() {
                self.states[j]
            } else {
                let span = self.t_new[j + 1] - self.t_new[j];
                let w = if span > 0.0 { ((t - self.t_new[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
                self.states[j] + (self.states[j + 1] - self.states[j]) * w
            };
            ts.push(t);
            xs.push(x);
            k += 1;
        }
        Ok((ts, xs))
    }

    pub const CSV_HEADER: [&'static str; 4] = ["t_original", "t_new", "x", "y"];

    pub fn write_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        csvio::write_table(
            out,
            preamble,
            &Self::CSV_HEADER,
            (0..self.states.len()).map(|k| {
                vec![self.t_original[k], self.t_new[k], self.states[k].x, self.states[k].y]
            }),
            &[],
        )
    }

    pub fn read_csv<R: Read>(input: R, target: Target) -> Result<Self> {
        let (rows, _) = csvio::read_table(input, &Self::CSV_HEADER)?;
        Ok(TransportedPath {
            target,
            t_original: rows.iter().map(|r| r[0]).collect(),
            t_new: rows.iter().map(|r| r[1]).collect(),
            states: rows.iter().map(|r| Vec2::new(r[2], r[3])).collect(),
        })
    }
}
