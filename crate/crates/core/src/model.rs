//! Detection statistics of a Ramsey measurement with imperfect, decaying visibility.
//!
//! A detection at stage `k` uses interaction time `2^k τ` and yields `u = ±1` with
//! probability `½[1 + u·V_k·cos(2^k φ − θ)]`, where `V_k = f_d·exp(−2^k τ / T₂)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wrap_phase;

/// Result of a single detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    /// `+1.0` or `−1.0`.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    /// Branch index used by decision-tree parameter tables: 0 for `+1`, 1 for `−1`.
    #[inline]
    pub fn branch(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }

    pub fn flipped(self) -> Outcome {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }
}

/// One recorded detection: outcome, stage exponent and the control phase used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub outcome: Outcome,
    pub stage: u32,
    theta: f64,
}

impl Detection {
    /// The control phase is reduced into `[0, 2π)`.
    pub fn new(outcome: Outcome, stage: u32, theta: f64) -> Self {
        Detection {
            outcome,
            stage,
            theta: wrap_phase(theta),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Initial visibility and coherence time of the probe.
///
/// `t2_over_tau` is the coherence time in units of the base interaction time and
/// may be `f64::INFINITY` for a probe without decoherence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    visibility: f64,
    t2_over_tau: f64,
}

impl MeasurementModel {
    /// Visibility must lie in `[0, 1]` and the coherence time must be positive.
    ///
    /// Zero visibility is accepted so that the information-free limit can be evaluated.
    pub fn new(visibility: f64, t2_over_tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::InvalidModel(format!(
                "visibility {visibility} outside [0, 1]"
            )));
        }
        if t2_over_tau.is_nan() || t2_over_tau <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "coherence time {t2_over_tau} must be positive"
            )));
        }
        Ok(MeasurementModel {
            visibility,
            t2_over_tau,
        })
    }

    /// Perfect visibility with no decoherence.
    pub fn ideal() -> Self {
        MeasurementModel {
            visibility: 1.0,
            t2_over_tau: f64::INFINITY,
        }
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }

    pub fn t2_over_tau(&self) -> f64 {
        self.t2_over_tau
    }

    /// `f_d·exp(−2^k / (T₂/τ))`.
    pub fn decayed_visibility(&self, stage: u32) -> f64 {
        if self.t2_over_tau.is_infinite() {
            return self.visibility;
        }
        let time = (stage as f64).exp2();
        self.visibility * (-time / self.t2_over_tau).exp()
    }

    pub fn outcome_probability(&self, outcome: Outcome, phi: f64, theta: f64, stage: u32) -> f64 {
        let v = self.decayed_visibility(stage);
        let scaled = (stage as f64).exp2() * phi;
        fringe(outcome, v, scaled, theta)
    }

    /// Maps a uniform draw in `[0, 1)` to an outcome: `+1` iff `draw < P(+1)`.
    pub fn sample_outcome(&self, phi: f64, theta: f64, stage: u32, draw: f64) -> Outcome {
        let scaled = (stage as f64).exp2() * phi;
        outcome_from_draw(self.decayed_visibility(stage), scaled, theta, draw)
    }
}

#[inline]
fn fringe(outcome: Outcome, visibility: f64, scaled_phase: f64, theta: f64) -> f64 {
    0.5 * (1.0 + outcome.sign() * visibility * (scaled_phase - theta).cos())
}

/// [`MeasurementModel::sample_outcome`] with the visibility and `2^k φ` already evaluated.
#[inline]
pub(crate) fn outcome_from_draw(
    visibility: f64,
    scaled_phase: f64,
    theta: f64,
    draw: f64,
) -> Outcome {
    if draw < fringe(Outcome::Plus, visibility, scaled_phase, theta) {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

/// `φ = 2γBτ`.
pub fn phase_from_field(field: f64, gamma: f64, tau: f64) -> f64 {
    2.0 * gamma * field * tau
}

/// Largest field magnitude that maps into a single phase period: `B_max = π/(2γτ)`.
pub fn field_range(gamma: f64, tau: f64) -> f64 {
    PI / (2.0 * gamma * tau)
}

/// Dynamic range `ΔB/B_max` corresponding to a Holevo variance, `√V_H / π`.
pub fn dynamic_range_from_variance(holevo_variance: f64) -> f64 {
    holevo_variance.sqrt() / PI
}

/// Holevo variance corresponding to a dynamic range, `π²(ΔB/B_max)²`.
pub fn variance_from_dynamic_range(dynamic_range: f64) -> f64 {
    PI * PI * dynamic_range * dynamic_range
}
