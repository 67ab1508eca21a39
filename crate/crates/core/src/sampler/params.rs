use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Churn settings of the stochastic Euler sampler.
///
/// At a step whose level lies in `[s_tmin, s_tmax]` the latent is first
/// re-noised from `σ` up to `σ·(1+γ)`, `γ = min(s_churn/N, √2−1)`, with
/// noise scaled by `s_noise`. `s_churn = 0` gives plain Euler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub s_churn: f64,
    pub s_tmin: f64,
    /// `None` is +∞.
    #[serde(default)]
    pub s_tmax: Option<f64>,
    pub s_noise: f64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        SamplerParams {
            s_churn: 40.0,
            s_tmin: 0.05,
            s_tmax: Some(50.0),
            s_noise: 1.003,
        }
    }
}

impl SamplerParams {
    /// Deterministic Euler (no churn).
    pub fn deterministic() -> Self {
        SamplerParams {
            s_churn: 0.0,
            s_tmin: 0.0,
            s_tmax: None,
            s_noise: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_churn >= 0.0 && self.s_churn.is_finite()) {
            return Err(Error::param("sampler.s_churn", "must be finite and >= 0"));
        }
        if !(self.s_tmin >= 0.0 && self.s_tmin.is_finite()) {
            return Err(Error::param("sampler.s_tmin", "must be finite and >= 0"));
        }
        if let Some(tmax) = self.s_tmax {
            if tmax.is_nan() || tmax <= 0.0 || tmax < self.s_tmin {
                return Err(Error::param(
                    "sampler.s_tmax",
                    "must be positive and >= s_tmin",
                ));
            }
        }
        if !(self.s_noise > 0.0 && self.s_noise.is_finite()) {
            return Err(Error::param(
                "sampler.s_noise",
                "must be positive and finite",
            ));
        }
        Ok(())
    }

    /// Churn factor γ for a step at level `sigma` of an `n_steps` schedule.
    pub fn gamma(&self, sigma: f64, n_steps: usize) -> f64 {
        let in_window = sigma >= self.s_tmin && self.s_tmax.is_none_or(|t| sigma <= t);
        if in_window && self.s_churn > 0.0 {
            (self.s_churn / n_steps as f64).min(std::f64::consts::SQRT_2 - 1.0)
        } else {
            0.0
        }
    }
}
