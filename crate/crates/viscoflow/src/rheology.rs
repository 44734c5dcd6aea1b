//! Viscosity laws with yield, the Huber-regularized magnitude, and the
//! multiplier projection.
//!
//! Three constitutive laws are supported. Writing `t` for the strain-rate
//! magnitude, the viscous factor is
//!
//! * Herschel-Bulkley: `nu(t) = mu * t^(p-2)` (Bingham at `p = 2`),
//! * Carreau with yield: `nu(t) = mu * (1 + t^2)^((p-2)/2)`,
//! * Casson: `nu(t) = mu + 2 * sqrt(tau_s / t)` (its flow index is fixed
//!   at 2).
//!
//! The plastic term is regularized through `|t|_gamma = max(tau_s, gamma*t)`,
//! which is exact outside a `1/gamma` neighborhood of the rigid zones.

use crate::error::{Error, Result};
use crate::tensor::{frob, scale, Mat2};
use serde::{Deserialize, Serialize};

/// Constitutive law selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Law {
    HerschelBulkley,
    CarreauYield,
    Casson,
}

/// Rheological and regularization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub law: Law,
    /// Flow index; shear-thinning for `1 < p < 2`, shear-thickening for
    /// `p > 2`. Forced to 2 for the Casson law.
    pub p: f64,
    /// Model constant (plastic viscosity in the Bingham case).
    pub mu: f64,
    /// Yield stress.
    pub tau_s: f64,
    /// Huber regularization parameter.
    pub gamma: f64,
}

/// Floor applied to strain magnitudes in quotients that are singular at zero
/// strain. The quotients vanish analytically as `t -> 0` for the supported
/// flow indices, so the floor only guards the pointwise evaluation.
pub const STRAIN_FLOOR: f64 = 1e-10;

impl ModelParams {
    pub fn new(law: Law, p: f64, mu: f64, tau_s: f64, gamma: f64) -> Result<Self> {
        let p = if law == Law::Casson { 2.0 } else { p };
        if !(p > 1.0) {
            return Err(Error::invalid(format!("flow index p = {p} must exceed 1")));
        }
        if !(mu > 0.0) {
            return Err(Error::invalid(format!("model constant mu = {mu} must be positive")));
        }
        if !(tau_s >= 0.0) {
            return Err(Error::invalid(format!("yield stress tau_s = {tau_s} must be nonnegative")));
        }
        if !(gamma > 0.0) {
            return Err(Error::invalid(format!("regularization gamma = {gamma} must be positive")));
        }
        Ok(ModelParams { law, p, mu, tau_s, gamma })
    }

    pub fn herschel_bulkley(p: f64, mu: f64, tau_s: f64, gamma: f64) -> Result<Self> {
        Self::new(Law::HerschelBulkley, p, mu, tau_s, gamma)
    }

    pub fn carreau(p: f64, mu: f64, tau_s: f64, gamma: f64) -> Result<Self> {
        Self::new(Law::CarreauYield, p, mu, tau_s, gamma)
    }

    pub fn casson(mu: f64, tau_s: f64, gamma: f64) -> Result<Self> {
        Self::new(Law::Casson, 2.0, mu, tau_s, gamma)
    }

    /// Viscous factor `nu(t)` at strain-rate magnitude `t >= 0`.
    pub fn nu(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("strain magnitude {t} is negative")));
        }
        Ok(self.nu_unchecked(t))
    }

    /// Derivative `nu'(t)`, with the same floor near `t = 0` as `nu`.
    pub fn nu_prime(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("strain magnitude {t} is negative")));
        }
        Ok(self.nu_prime_unchecked(t))
    }

    #[inline]
    pub(crate) fn nu_unchecked(&self, t: f64) -> f64 {
        match self.law {
            Law::HerschelBulkley => self.mu * t.max(STRAIN_FLOOR).powf(self.p - 2.0),
            Law::CarreauYield => self.mu * (1.0 + t * t).powf(0.5 * (self.p - 2.0)),
            Law::Casson => self.mu + 2.0 * (self.tau_s / t.max(STRAIN_FLOOR)).sqrt(),
        }
    }

    #[inline]
    pub(crate) fn nu_prime_unchecked(&self, t: f64) -> f64 {
        match self.law {
            Law::HerschelBulkley => {
                if self.p == 2.0 {
                    0.0
                } else {
                    self.mu * (self.p - 2.0) * t.max(STRAIN_FLOOR).powf(self.p - 3.0)
                }
            }
            Law::CarreauYield => {
                self.mu * (self.p - 2.0) * t * (1.0 + t * t).powf(0.5 * (self.p - 4.0))
            }
            Law::Casson => -self.tau_s.sqrt() * t.max(STRAIN_FLOOR).powf(-1.5),
        }
    }

    /// Huber-regularized magnitude `max(tau_s, gamma * t)`.
    #[inline]
    pub fn huber_abs(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        self.tau_s.max(self.gamma * t)
    }

    /// Yielded-region indicator: 1 iff `gamma * t >= tau_s` (ties count as
    /// yielded).
    #[inline]
    pub fn chi_active(&self, t: f64) -> bool {
        self.gamma * t >= self.tau_s
    }

    /// Projection of the plastic multiplier onto the ball of radius `tau_s`:
    /// `q * tau_s / max(tau_s, |q|)`.
    ///
    /// The scale factor is nudged down by ulps if rounding carries the
    /// result past the ball radius, so projecting twice is exactly a
    /// no-op.
    #[inline]
    pub fn project_q(&self, q: &Mat2) -> Mat2 {
        let norm = frob(q);
        if norm <= self.tau_s {
            return *q;
        }
        let mut factor = self.tau_s / norm;
        loop {
            let out = scale(q, factor);
            if frob(&out) <= self.tau_s {
                return out;
            }
            factor *= 1.0 - f64::EPSILON;
        }
    }
}
