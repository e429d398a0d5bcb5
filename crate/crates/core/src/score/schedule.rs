use crate::error::{Error, Result};

/// Linear diffusion schedule `α_τ = 1 - τ`, `β²_τ = τ` with the derived
/// forward coefficients
///
/// ```text
/// b(τ)  = d log α / dτ            = -1 / (1 - τ)
/// σ²(τ) = dβ²/dτ - 2 b(τ) β²_τ    = (1 + τ) / (1 - τ)
/// ```
///
/// `b` and `σ²` diverge at `τ = 1`, so every evaluation clamps `τ` into
/// `[eps_tau, 1 - eps_tau]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionSchedule {
    pub eps_tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub alpha: f64,
    pub beta2: f64,
    pub b: f64,
    pub sigma2: f64,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self { eps_tau: 1e-4 }
    }
}

impl DiffusionSchedule {
    pub fn new(eps_tau: f64) -> Result<Self> {
        if !(eps_tau > 0.0 && eps_tau < 0.5) {
            return Err(Error::invalid(format!("eps_tau must lie in (0, 0.5), got {eps_tau}")));
        }
        Ok(Self { eps_tau })
    }

    /// Unclamped `α_τ`.
    pub fn alpha(tau: f64) -> f64 {
        1.0 - tau
    }

    /// Unclamped `β²_τ`.
    pub fn beta2(tau: f64) -> f64 {
        tau
    }

    pub fn clamp(&self, tau: f64) -> f64 {
        tau.clamp(self.eps_tau, 1.0 - self.eps_tau)
    }

    pub fn coefficients(&self, tau: f64) -> Result<Coefficients> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::invalid(format!("pseudo-time must lie in [0, 1], got {tau}")));
        }
        Ok(self.at(tau))
    }

    /// Coefficients at the clamped pseudo-time; `tau` is assumed in range.
    pub(crate) fn at(&self, tau: f64) -> Coefficients {
        let t = self.clamp(tau);
        let one_minus = 1.0 - t;
        Coefficients { alpha: one_minus, beta2: t, b: -1.0 / one_minus, sigma2: (1.0 + t) / one_minus }
    }
}
