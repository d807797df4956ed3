//! Numerics for spike concentration in a fourth-order constant-Q-curvature
//! problem: radial ground states, normal-coordinate metric jets, ε-expansions
//! of the scaled energy, remainder scaling, and the reduced concentration
//! problem.

pub mod banded;
pub mod cli;
pub mod energy;
pub mod geometry;
pub mod groundstate;
pub mod params;
pub mod quad;
pub mod reduction;

pub use groundstate::{RadialGrid, RadialProfile};
pub use params::{FactorRoots, ProblemParams, ProductSpec};

/// Library version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Surface area of the unit sphere `S^{n−1} ⊂ R^n`.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(0.5 * n as f64) / quad::gamma_half_integer(0.5 * n as f64)
}
