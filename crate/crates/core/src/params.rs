//! Angle pair, derived constants and regime classification.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance used to decide that a grid node sits on a degenerate line.
const DEGENERATE_TOL: f64 = 1e-12;

/// Reflection angles on the lower face (`theta1`, the positive x axis) and
/// the upper face (`theta2`, the positive y axis). Positive angles point
/// towards the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WedgeAngles {
    pub theta1: f64,
    pub theta2: f64,
}

impl WedgeAngles {
    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        check_angle("theta1", theta1)?;
        check_angle("theta2", theta2)?;
        Ok(WedgeAngles { theta1, theta2 })
    }

    pub fn a1(&self) -> f64 {
        self.theta1.tan()
    }

    pub fn a2(&self) -> f64 {
        self.theta2.tan()
    }

    /// Normalized wedge opening `(θ1 + θ2) / (π/2)`.
    pub fn alpha(&self) -> f64 {
        (self.theta1 + self.theta2) / FRAC_PI_2
    }

    pub fn swapped(&self) -> Self {
        WedgeAngles {
            theta1: self.theta2,
            theta2: self.theta1,
        }
    }
}

fn check_angle(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value.abs() < FRAC_PI_2 {
        Ok(())
    } else {
        Err(Error::InadmissibleAngle { name, value })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub angles: WedgeAngles,
    pub a1: f64,
    pub a2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub psi: f64,
    pub kappa: f64,
    /// `log|a1| + log|a2|`; equals `log β`. `-inf` when either tangent vanishes.
    pub rho: f64,
}

/// Derive every scalar constant from the angle pair.
///
/// Fails when `θ1 + θ2 = 0` (equivalently `a1 + a2 = 0`), where ψ and κ are undefined.
pub fn derive(angles: WedgeAngles) -> Result<DerivedParams> {
    let WedgeAngles { theta1, theta2 } = angles;
    let a1 = angles.a1();
    let a2 = angles.a2();
    let opening = theta1 + theta2;
    if opening == 0.0 {
        return Err(Error::DegenerateAngles {
            theta1,
            theta2,
            reason: "theta1 + theta2 = 0",
        });
    }
    if a1 + a2 == 0.0 {
        return Err(Error::DegenerateAngles {
            theta1,
            theta2,
            reason: "a1 + a2 = 0",
        });
    }
    let rho = a1.abs().ln() + a2.abs().ln();
    Ok(DerivedParams {
        angles,
        a1,
        a2,
        alpha: opening / FRAC_PI_2,
        beta: (a1 * a2).abs(),
        psi: rho / (opening * (a1 + a2)),
        kappa: 1.0 / (opening * (a1 + a2)),
        rho,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    /// α ≥ 1.
    NotSemimartingale,
    /// α ≤ 0.
    Transient,
    /// 0 < α < 1 and β < 1.
    PathwiseUnique,
    /// 0 < α < 1, β > 1, a1 > 0 > a2 and ψ > 1/α.
    TheoremRegion,
    /// Every remaining admissible pair with 0 < α < 1 and β ≥ 1.
    UnresolvedMixedSign,
}

impl RegimeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeLabel::NotSemimartingale => "not_semimartingale",
            RegimeLabel::Transient => "transient",
            RegimeLabel::PathwiseUnique => "pathwise_unique",
            RegimeLabel::TheoremRegion => "theorem_region",
            RegimeLabel::UnresolvedMixedSign => "unresolved_mixed_sign",
        }
    }
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The ψ > 1/α test in its α-free form: `(log|a1| + log|a2|) / (a1 + a2) > π/2`.
pub fn growth_beats_decay(p: &DerivedParams) -> bool {
    p.rho / (p.a1 + p.a2) > FRAC_PI_2
}

/// Classify a parameter set. Ties (β = 1, ψ = 1/α) fall on the non-theorem side.
pub fn classify(p: &DerivedParams) -> RegimeLabel {
    if p.alpha >= 1.0 {
        RegimeLabel::NotSemimartingale
    } else if p.alpha <= 0.0 {
        RegimeLabel::Transient
    } else if p.beta < 1.0 {
        RegimeLabel::PathwiseUnique
    } else if p.beta > 1.0 && p.a1 > 0.0 && p.a2 < 0.0 && growth_beats_decay(p) {
        RegimeLabel::TheoremRegion
    } else {
        RegimeLabel::UnresolvedMixedSign
    }
}

/// Label attached to a grid node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridLabel {
    Regime(RegimeLabel),
    /// On the line θ1 + θ2 = 0, where ψ and κ are undefined.
    Degenerate,
    /// On the edge of the angle square (|θ| = π/2, infinite tangent).
    Inadmissible,
}

impl GridLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            GridLabel::Regime(r) => r.as_str(),
            GridLabel::Degenerate => "degenerate",
            GridLabel::Inadmissible => "inadmissible",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridNode {
    pub theta1: f64,
    pub theta2: f64,
    pub params: Option<DerivedParams>,
    pub label: GridLabel,
}

/// Label one node, marking degenerate and inadmissible nodes instead of failing.
pub fn label_node(theta1: f64, theta2: f64) -> GridNode {
    let inadmissible =
        |t: f64| !t.is_finite() || t.abs() >= FRAC_PI_2 - DEGENERATE_TOL;
    let (params, label) = if inadmissible(theta1) || inadmissible(theta2) {
        (None, GridLabel::Inadmissible)
    } else if (theta1 + theta2).abs() <= DEGENERATE_TOL {
        (None, GridLabel::Degenerate)
    } else {
        match WedgeAngles::new(theta1, theta2).and_then(derive) {
            Ok(p) => (Some(p), GridLabel::Regime(classify(&p))),
            Err(_) => (None, GridLabel::Degenerate),
        }
    };
    GridNode {
        theta1,
        theta2,
        params,
        label,
    }
}

/// Row-major grid over `theta1_range × theta2_range` (θ1 varies slowest),
/// `resolution` nodes per axis including both endpoints.
pub fn region_grid(
    theta1_range: (f64, f64),
    theta2_range: (f64, f64),
    resolution: usize,
) -> Result<Vec<GridNode>> {
    for (name, (lo, hi)) in [("theta1", theta1_range), ("theta2", theta2_range)] {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::Invalid(format!("empty {name} range [{lo}, {hi}]")));
        }
        if lo < -FRAC_PI_2 || hi > FRAC_PI_2 {
            return Err(Error::Invalid(format!(
                "{name} range [{lo}, {hi}] leaves [-pi/2, pi/2]"
            )));
        }
    }
    if resolution < 2 {
        return Err(Error::Invalid(format!("resolution {resolution} < 2")));
    }
    let node = |(lo, hi): (f64, f64), i: usize| {
        if i + 1 == resolution {
            hi
        } else {
            lo + (hi - lo) * (i as f64) / ((resolution - 1) as f64)
        }
    };
    let mut out = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let t1 = node(theta1_range, i);
        for j in 0..resolution {
            out.push(label_node(t1, node(theta2_range, j)));
        }
    }
    Ok(out)
}

/// Default plotting window `[π/4, π/2] × [-π/2, 0]`.
pub const DEFAULT_REGION: ((f64, f64), (f64, f64)) = ((PI / 4.0, FRAC_PI_2), (-FRAC_PI_2, 0.0));

pub const GRID_CSV_HEADER: [&str; 9] = [
    "theta1", "theta2", "a1", "a2", "alpha", "beta", "psi", "kappa", "label",
];

/// Write grid nodes as CSV. Undefined constants are written as empty fields.
pub fn write_grid_csv<W: Write>(nodes: &[GridNode], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GRID_CSV_HEADER)?;
    for n in nodes {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let p = n.params;
        w.write_record([
            n.theta1.to_string(),
            n.theta2.to_string(),
            f(p.map(|p| p.a1)),
            f(p.map(|p| p.a2)),
            f(p.map(|p| p.alpha)),
            f(p.map(|p| p.beta)),
            f(p.map(|p| p.psi)),
            f(p.map(|p| p.kappa)),
            n.label.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(t1: f64, t2: f64) -> DerivedParams {
        derive(WedgeAngles::new(t1, t2).unwrap()).unwrap()
    }

    #[test]
    fn alpha_for_seven_sixteenths() {
        let p = params(7.0 * PI / 16.0, -PI / 8.0);
        assert!((p.alpha - 0.625).abs() < 1e-15);
    }

    #[test]
    fn degenerate_angles_error() {
        let err = derive(WedgeAngles::new(PI / 4.0, -PI / 4.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DegenerateAngles { .. }));
    }

    #[test]
    fn inadmissible_angle_error() {
        assert!(WedgeAngles::new(FRAC_PI_2, 0.1).is_err());
        assert!(WedgeAngles::new(0.1, f64::NAN).is_err());
    }

    #[test]
    fn kappa_reference_value() {
        let p = params(PI / 3.0, -PI / 6.0);
        let expected = 1.0 / ((PI / 6.0) * (3f64.sqrt() - 1.0 / 3f64.sqrt()));
        assert!((p.kappa - expected).abs() < 1e-12);
        assert!((p.kappa - 1.6540).abs() < 5e-5);
    }

    #[test]
    fn classification_examples() {
        assert_eq!(
            classify(&params(7.0 * PI / 16.0, -PI / 8.0)),
            RegimeLabel::UnresolvedMixedSign
        );
        assert_eq!(classify(&params(PI / 6.0, PI / 6.0)), RegimeLabel::PathwiseUnique);
        assert_eq!(
            classify(&params(3.0 * PI / 8.0 - 0.05, -3.0 * PI / 8.0 + 0.10)),
            RegimeLabel::TheoremRegion
        );
        assert_eq!(classify(&params(PI / 3.0, PI / 4.0)), RegimeLabel::NotSemimartingale);
        assert_eq!(classify(&params(-PI / 3.0, PI / 6.0)), RegimeLabel::Transient);
    }

    #[test]
    fn theorem_example_inequalities_hold_individually() {
        let p = params(3.0 * PI / 8.0 - 0.05, -3.0 * PI / 8.0 + 0.10);
        assert!(p.alpha > 0.0 && p.alpha < 1.0);
        assert!(p.beta > 1.0);
        assert!(p.psi > 1.0 / p.alpha);
    }

    #[test]
    fn exact_tie_goes_to_non_theorem_side() {
        let mut p = params(PI / 3.0, -PI / 6.0);
        p.beta = 1.0;
        assert_eq!(classify(&p), RegimeLabel::UnresolvedMixedSign);
    }

    #[test]
    fn grid_cardinality_and_order() {
        let ((a, b), (c, d)) = DEFAULT_REGION;
        let g = region_grid((a, b), (c, d), 3).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0].theta1, a);
        assert_eq!(g[1].theta1, a);
        assert!((g[3].theta1 - (a + b) / 2.0).abs() < 1e-15);
        assert_eq!(g[8].theta2, d);
        // θ1 = π/4, θ2 = -π/4 lies on the degenerate line; θ = ±π/2 nodes are on the edge.
        assert_eq!(g[1].label, GridLabel::Degenerate);
        assert_eq!(g[0].label, GridLabel::Inadmissible);
        assert_eq!(g[6].label, GridLabel::Inadmissible);
    }

    #[test]
    fn grid_errors() {
        assert!(region_grid((1.0, 1.0), (0.0, 0.5), 4).is_err());
        assert!(region_grid((0.0, 1.0), (0.0, 0.5), 1).is_err());
        assert!(region_grid((0.0, 2.0), (0.0, 0.5), 4).is_err());
    }

    #[test]
    fn remark_nodes_in_grid() {
        assert_ne!(
            label_node(7.0 * PI / 16.0, -PI / 8.0).label,
            GridLabel::Regime(RegimeLabel::TheoremRegion)
        );
        assert_eq!(
            label_node(3.0 * PI / 8.0 - 0.05, -3.0 * PI / 8.0 + 0.10).label,
            GridLabel::Regime(RegimeLabel::TheoremRegion)
        );
    }

    #[test]
    fn nonnegative_tangents_never_amplify() {
        let g = region_grid((0.0, 1.5), (0.0, 1.5), 61).unwrap();
        for n in g {
            if let Some(p) = n.params {
                if p.alpha < 1.0 {
                    assert!(p.beta < 1.0, "{n:?}");
                }
            }
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = region_grid((0.2, 0.4), (-0.1, 0.3), 2).unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "theta1,theta2,a1,a2,alpha,beta,psi,kappa,label");
        assert_eq!(lines.len(), 5);
    }

    fn admissible() -> impl Strategy<Value = f64> {
        -1.55f64..1.55
    }

    proptest! {
        #[test]
        fn rho_is_log_beta(t1 in admissible(), t2 in admissible()) {
            prop_assume!((t1 + t2).abs() > 1e-6 && t1.abs() > 1e-6 && t2.abs() > 1e-6);
            let p = params(t1, t2);
            prop_assert!((p.rho - p.beta.ln()).abs() <= 1e-12 * p.rho.abs().max(1.0));
        }

        #[test]
        fn psi_test_matches_alpha_free_form(t1 in admissible(), t2 in admissible()) {
            prop_assume!((t1 + t2).abs() > 1e-6 && t1.abs() > 1e-6 && t2.abs() > 1e-6);
            let p = params(t1, t2);
            prop_assume!(p.alpha > 0.0);
            let lhs = p.psi > 1.0 / p.alpha;
            let rhs = p.rho / (p.a1 + p.a2) > FRAC_PI_2;
            // Guard against ties within rounding.
            prop_assume!((p.psi * p.alpha - 1.0).abs() > 1e-9);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn swap_symmetric_labels(t1 in admissible(), t2 in admissible()) {
            prop_assume!((t1 + t2).abs() > 1e-6);
            let p = params(t1, t2);
            let q = derive(p.angles.swapped()).unwrap();
            let (lp, lq) = (classify(&p), classify(&q));
            for l in [RegimeLabel::PathwiseUnique, RegimeLabel::NotSemimartingale] {
                prop_assert_eq!(lp == l, lq == l);
            }
        }
    }
}
