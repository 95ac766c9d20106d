//! Simulation and optimization of adaptive phase estimation with low-visibility
//! Ramsey interferometry, as used for NV-centre magnetometry.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: detection probabilities with decaying fringe visibility.
//! - [`posterior`]: the Bayesian phase distribution held as a half-stored Fourier
//!   series, with the coefficient update rule, estimators and Holevo variance.
//! - [`protocol`]: detection schedules, the five control-phase policies and
//!   single-trial execution.
//! - [`eval`]: exact enumeration and seeded Monte Carlo evaluation of the Holevo
//!   variance, plus analytic bounds.
//! - [`pso`]: constriction-factor particle swarm search over decision-tree
//!   phase increments.
//!
//! All phases are expressed as `φ = 2γBτ ∈ (−π, π]`; field units only appear in
//! [`model::phase_from_field`] and [`model::field_range`].

pub mod error;
pub mod eval;
pub mod model;
pub mod posterior;
pub mod protocol;
pub mod pso;
mod sum;

pub use error::{Error, Result};
pub use eval::{MonteCarloOptions, VarianceMethod, VarianceReport};
pub use model::{Detection, MeasurementModel, Outcome};
pub use posterior::FourierPosterior;
pub use protocol::{Policy, PolicyKind, Schedule};
pub use pso::{SwarmConfig, SwarmResult};

use std::f64::consts::PI;

/// Reduces a phase into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let r = theta.rem_euclid(2.0 * PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

/// Reduces a phase into `(−π, π]`.
pub fn wrap_signed(phi: f64) -> f64 {
    let r = wrap_phase(phi);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}
