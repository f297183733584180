use thiserror::Error;

use crate::geometry::Vec2;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("angle {name} = {value} is outside the open interval (-pi/2, pi/2)")]
    InadmissibleAngle { name: &'static str, value: f64 },

    #[error("degenerate angles (theta1 = {theta1}, theta2 = {theta2}): {reason}")]
    DegenerateAngles {
        theta1: f64,
        theta2: f64,
        reason: &'static str,
    },

    #[error("reflection matrix with a1 = {a1}, a2 = {a2} is not completely-S")]
    NotCompletelyS { a1: f64, a2: f64 },

    #[error("one-step reflection matrix with a1 = {a1}, a2 = {a2} is not a P-matrix (1 - a1*a2 <= 0)")]
    NotPMatrix { a1: f64, a2: f64 },

    #[error("point {point} lies outside the closed domain")]
    OutsideDomain { point: Vec2 },

    #[error(
        "no feasible complementarity pattern for state {state}, displacement {displacement}; \
         violations [interior, lower, upper, corner] = {violations:?}"
    )]
    NoFeasiblePattern {
        state: Vec2,
        displacement: Vec2,
        violations: [f64; 4],
    },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{what} = {value} is outside the domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("requested {requested} steps exceeds the cap of {cap}")]
    StepCap { requested: u64, cap: u64 },

    #[error("trajectory entered the origin guard at index {index}")]
    OriginGuard { index: usize },

    #[error("{failed} of {total} replicas failed (threshold {threshold}); first failure: {first}")]
    ReplicaFailures {
        failed: usize,
        total: usize,
        threshold: f64,
        first: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}
