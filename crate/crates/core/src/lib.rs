//! Simulation and verification toolkit for obliquely reflected Brownian motion
//! (ORBM) in the closed first quadrant.
//!
//! The quadrant `D = {x >= 0, y >= 0}` has two faces: the lower face
//! `Γ_d = {y = 0}` with push direction `(-a1, 1)` and the upper face
//! `Γ_u = {x = 0}` with push direction `(1, -a2)`, where `a_i = tan θ_i`.
//!
//! Modules:
//! - [`params`]: derived constants (α, β, ψ, κ, ρ) and regime classification.
//! - [`reflect`]: the discretized Skorokhod map, one 2×2 complementarity problem per step.
//! - [`drivers`]: seeded Brownian driving paths and the deterministic amplification cycle.
//! - [`sim`]: drifts, stop rules, excursion statistics and the Monte Carlo harness.
//! - [`coupling`]: two solutions off one driver and their gap dynamics.
//! - [`analytics`]: closed forms for the strip's vertical diffusion.
//! - [`conformal`]: quadrant → wedge → strip maps, `h` and its gradient, clock changes.
//! - [`verify`]: named verification suites aggregating the checks above.

pub mod analytics;
pub mod conformal;
pub mod coupling;
pub mod drivers;
mod csvio;
mod error;
pub mod geometry;
pub mod params;
pub mod reflect;
pub mod rng;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::Vec2;

/// Crate version, embedded in every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
