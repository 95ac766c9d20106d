//! Fourier-series representation of the phase posterior.
//!
//! The (unnormalized) distribution is `P(φ) = e^{log_weight} Σ_w b_w e^{iwφ}`. Since
//! `P` is real, `b_{−w} = conj(b_w)` and only `w = 0..=W` is stored. A detection at
//! stage `k` couples each coefficient to its neighbours at distance `2^k`, so after
//! stage `k` only indices that are multiples of `2^k` can be nonzero; untouched
//! entries stay exactly zero.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::Outcome;
use crate::wrap_signed;

#[derive(Clone, Debug, PartialEq)]
pub struct FourierPosterior {
    coeffs: Vec<Complex64>,
    /// Highest index still tracked. Entries above it are zero.
    horizon: usize,
    log_weight: f64,
    /// Renormalization factors not yet folded into `log_weight`.
    pending_scale: f64,
    /// Smallest stride applied so far; every nonzero index is a multiple of it.
    grain: usize,
}

impl FourierPosterior {
    /// Uniform prior `P(φ) = 1/(2π)` with room for indices up to `max_index`.
    pub fn uniform_prior(max_index: usize) -> Result<Self> {
        if max_index < 1 {
            return Err(Error::PosteriorTooSmall {
                stage: 0,
                max_index,
            });
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); max_index + 1];
        coeffs[0] = Complex64::new(1.0 / (2.0 * PI), 0.0);
        Ok(FourierPosterior {
            coeffs,
            horizon: max_index,
            log_weight: 0.0,
            pending_scale: 1.0,
            grain: max_index + 1,
        })
    }

    pub fn max_index(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Accumulated natural-log renormalization.
    pub fn log_weight(&self) -> f64 {
        self.log_weight + self.pending_scale.ln()
    }

    /// Stored coefficients `b_0..=b_W`.
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `b_w` for any integer `w`, using `b_{−w} = conj(b_w)`; zero beyond the stored range.
    pub fn coeff(&self, w: i64) -> Complex64 {
        let idx = w.unsigned_abs() as usize;
        if idx > self.horizon {
            return Complex64::new(0.0, 0.0);
        }
        let c = self.coeffs[idx];
        if w < 0 {
            c.conj()
        } else {
            c
        }
    }

    fn stride(&self, stage: u32) -> Result<usize> {
        let max_index = self.max_index();
        1usize
            .checked_shl(stage)
            .filter(|&s| s <= max_index)
            .ok_or(Error::PosteriorTooSmall { stage, max_index })
    }

    /// Multiplies the distribution by the likelihood `½[1 + uV cos(2^k φ − θ)]`:
    ///
    /// `b_w ← ½ b_w + (uV/4)(b_{w−2^k} e^{−iθ} + b_{w+2^k} e^{iθ})`.
    ///
    /// No renormalization is applied; see [`observe`](Self::observe).
    pub fn bayes_update(
        &mut self,
        outcome: Outcome,
        theta: f64,
        stage: u32,
        visibility: f64,
    ) -> Result<()> {
        let stride = self.stride(stage)?;
        self.update_strided(stride, outcome.sign() * visibility * 0.25, theta);
        Ok(())
    }

    fn update_strided(&mut self, stride: usize, amplitude: f64, theta: f64) {
        self.update_scaled(stride, amplitude, theta, 1.0);
    }

    /// The coefficient update with every new coefficient multiplied by `scale`.
    fn update_scaled(&mut self, stride: usize, amplitude: f64, theta: f64, scale: f64) {
        if stride > self.grain {
            self.update_general(stride, amplitude, theta, scale);
            return;
        }
        self.grain = stride;
        let limit = self.horizon;
        let c = &mut self.coeffs[..=limit];
        let (sin, cos) = theta.sin_cos();
        let (a, h) = (amplitude * scale, 0.5 * scale);
        let down = Complex64::new(a * cos, -a * sin);
        let up = Complex64::new(a * cos, a * sin);
        let mut below = if stride <= limit {
            c[stride].conj()
        } else {
            Complex64::new(0.0, 0.0)
        };
        let mut w = 0;
        while w <= limit {
            let current = c[w];
            let above = if w + stride <= limit {
                c[w + stride]
            } else {
                Complex64::new(0.0, 0.0)
            };
            c[w] = current * h + below * down + above * up;
            below = current;
            w += stride;
        }
        c[0].im = 0.0;
    }

    /// Update for a stride coarser than the current support grain (stages applied out of
    /// descending order). Works from a copy of the old coefficients.
    fn update_general(&mut self, stride: usize, amplitude: f64, theta: f64, scale: f64) {
        let (sin, cos) = theta.sin_cos();
        let (a, h) = (amplitude * scale, 0.5 * scale);
        let down = Complex64::new(a * cos, -a * sin);
        let up = Complex64::new(a * cos, a * sin);
        let old = self.coeffs.clone();
        let limit = self.horizon;
        let get = |w: i64| -> Complex64 {
            let idx = w.unsigned_abs() as usize;
            if idx > limit {
                Complex64::new(0.0, 0.0)
            } else if w < 0 {
                old[idx].conj()
            } else {
                old[idx]
            }
        };
        let s = stride as i64;
        for w in (0..=limit).step_by(self.grain) {
            let wi = w as i64;
            self.coeffs[w] = old[w] * h + get(wi - s) * down + get(wi + s) * up;
        }
        self.coeffs[0].im = 0.0;
    }

    /// New `b_0` after an update, without modifying the state.
    fn updated_b0(&self, stride: usize, amplitude: f64, theta: f64) -> f64 {
        let neighbour = if stride <= self.horizon {
            self.coeffs[stride]
        } else {
            Complex64::new(0.0, 0.0)
        };
        let (sin, cos) = theta.sin_cos();
        0.5 * self.coeffs[0].re + 2.0 * amplitude * (neighbour.re * cos - neighbour.im * sin)
    }

    /// Rescales so that `2π·b_0 = 1`, moving the scale into the log-weight.
    ///
    /// Returns the factor removed, which after a single update from a normalized
    /// state is the probability of the observed outcome. A state with `b_0 ≤ 0`
    /// (an impossible outcome sequence) is cleared to zero with weight `−∞`.
    pub fn renormalize(&mut self) -> f64 {
        let factor = 2.0 * PI * self.coeffs[0].re;
        if !(factor > 0.0 && factor.is_finite()) {
            self.coeffs
                .iter_mut()
                .for_each(|c| *c = Complex64::new(0.0, 0.0));
            self.log_weight = f64::NEG_INFINITY;
            self.pending_scale = 1.0;
            return 0.0;
        }
        let scale = 1.0 / factor;
        for c in &mut self.coeffs[..=self.horizon] {
            *c *= scale;
        }
        self.coeffs[0] = Complex64::new(1.0 / (2.0 * PI), 0.0);
        self.absorb_scale(factor);
        factor
    }

    fn absorb_scale(&mut self, factor: f64) {
        self.pending_scale *= factor;
        if !(1e-150..=1e150).contains(&self.pending_scale) {
            self.log_weight += self.pending_scale.ln();
            self.pending_scale = 1.0;
        }
    }

    /// Bayes update followed by renormalization. Returns the conditional probability of
    /// the outcome given the detections already applied.
    pub fn observe(
        &mut self,
        outcome: Outcome,
        theta: f64,
        stage: u32,
        visibility: f64,
    ) -> Result<f64> {
        let stride = self.stride(stage)?;
        let amplitude = outcome.sign() * visibility * 0.25;
        let before = 2.0 * PI * self.coeffs[0].re;
        let factor = 2.0 * PI * self.updated_b0(stride, amplitude, theta);
        if !(factor > 0.0 && factor.is_finite() && before > 0.0) {
            self.update_strided(stride, amplitude, theta);
            self.renormalize();
            return Ok(0.0);
        }
        self.update_scaled(stride, amplitude, theta, 1.0 / factor);
        self.coeffs[0] = Complex64::new(1.0 / (2.0 * PI), 0.0);
        self.absorb_scale(factor);
        Ok(factor / before)
    }

    /// Stops tracking indices above `horizon`.
    ///
    /// After truncation, coefficients `b_w` with `w ≤ horizon − R` remain exact after any
    /// further updates whose stride sum is at most `R`.
    pub fn truncate(&mut self, horizon: usize) {
        if horizon < self.horizon {
            for c in &mut self.coeffs[horizon + 1..=self.horizon] {
                *c = Complex64::new(0.0, 0.0);
            }
            self.horizon = horizon;
        }
    }

    /// Total mass `e^{log_weight}·2π·b_0`: the probability of the applied outcome
    /// sequence under a uniform prior.
    pub fn normalization(&self) -> f64 {
        if self.log_weight == f64::NEG_INFINITY {
            return 0.0;
        }
        self.log_weight.exp() * self.pending_scale * 2.0 * PI * self.coeffs[0].re
    }

    /// `arg(b_{−1})` in `(−π, π]`, or 0 when `b_1 = 0`.
    pub fn phase_estimate(&self) -> f64 {
        arg_of_conjugate(self.coeff(1))
    }

    /// `arg(b_{−2^k})`, an estimate of `2^k φ` modulo `2π`; 0 when the coefficient vanishes.
    pub fn scaled_phase_estimate(&self, stage: u32) -> Result<f64> {
        let stride = self.stride(stage)?;
        Ok(arg_of_conjugate(self.coeff(stride as i64)))
    }

    /// `|b_1| / b_0`, in `[0, 1]`.
    pub fn sharpness(&self) -> f64 {
        let b0 = self.coeffs[0].re;
        if b0 > 0.0 {
            (self.coeff(1).norm() / b0).min(1.0)
        } else {
            0.0
        }
    }

    /// Evaluates the stored series `Σ_w b_w e^{iwφ}` at `phi` (without the log-weight factor).
    pub fn density(&self, phi: f64) -> f64 {
        let b0 = self.coeffs[0].re;
        let tail: f64 = (1..=self.horizon)
            .map(|w| {
                let c = self.coeffs[w];
                let (s, co) = (w as f64 * phi).sin_cos();
                c.re * co - c.im * s
            })
            .sum();
        b0 + 2.0 * tail
    }
}

fn arg_of_conjugate(c: Complex64) -> f64 {
    if c.re == 0.0 && c.im == 0.0 {
        0.0
    } else {
        wrap_signed(-c.arg())
    }
}

/// `S^{−2} − 1`, infinite at zero sharpness.
pub fn holevo_variance(sharpness: f64) -> f64 {
    if sharpness <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / (sharpness * sharpness) - 1.0
    }
}
