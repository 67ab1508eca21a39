//! Decreasing noise levels `σ_0 = σ_max > … > σ_{N-1} = σ_min > σ_N = 0`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Parameters of the Karras ρ-ramp. Jobs store these, never the expanded array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KarrasParams {
    pub n_steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
}

impl Default for KarrasParams {
    fn default() -> Self {
        KarrasParams {
            n_steps: 50,
            sigma_min: 0.002,
            sigma_max: 80.0,
            rho: 7.0,
        }
    }
}

impl KarrasParams {
    /// Defaults for the analytic backend, scaled to unit-range data.
    pub fn analytic() -> Self {
        KarrasParams {
            sigma_min: 0.01,
            sigma_max: 20.0,
            ..Self::default()
        }
    }

    pub fn with_steps(self, n_steps: usize) -> Self {
        KarrasParams { n_steps, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(Error::param(
                "n_steps",
                format!("must be >= 2, got {}", self.n_steps),
            ));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min.is_finite()) {
            return Err(Error::param("sigma_min", "must be positive and finite"));
        }
        if !(self.sigma_max > self.sigma_min && self.sigma_max.is_finite()) {
            return Err(Error::param(
                "sigma_max",
                "must be finite and greater than sigma_min",
            ));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::param("rho", "must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSchedule<T> {
    sigmas: Vec<T>,
}

impl<T: Scalar> SigmaSchedule<T> {
    /// `σ_i = (σ_max^{1/ρ} + i/(N−1)·(σ_min^{1/ρ} − σ_max^{1/ρ}))^ρ` for
    /// `i < N`, then a terminal 0. Evaluated in f64 and rounded once to `T`.
    pub fn karras(params: &KarrasParams) -> Result<Self> {
        params.validate()?;
        let n = params.n_steps;
        let inv_rho = 1.0 / params.rho;
        let hi = params.sigma_max.powf(inv_rho);
        let lo = params.sigma_min.powf(inv_rho);
        let mut sigmas: Vec<T> = (0..n)
            .map(|i| {
                let ramp = i as f64 / (n - 1) as f64;
                T::from_f64_lossy((hi + ramp * (lo - hi)).powf(params.rho))
            })
            .collect();
        // Pin the endpoints against pow round-off.
        sigmas[0] = T::from_f64_lossy(params.sigma_max);
        sigmas[n - 1] = T::from_f64_lossy(params.sigma_min);
        sigmas.push(T::zero());
        Self::from_sigmas(sigmas).map_err(|e| match e {
            Error::Parameter { reason, .. } => Error::param(
                "n_steps",
                format!("schedule collapses at {} precision: {reason}", T::NAME),
            ),
            e => e,
        })
    }

    /// Validates an explicit level sequence.
    pub fn from_sigmas(sigmas: Vec<T>) -> Result<Self> {
        if sigmas.len() < 2 {
            return Err(Error::param("sigmas", "need at least two levels"));
        }
        if *sigmas.last().unwrap() != T::zero() {
            return Err(Error::param("sigmas", "final level must be exactly 0"));
        }
        for (i, w) in sigmas.windows(2).enumerate() {
            if !(w[0].is_finite() && w[0] > w[1]) {
                return Err(Error::param(
                    "sigmas",
                    format!("not strictly decreasing at index {i}"),
                ));
            }
        }
        Ok(SigmaSchedule { sigmas })
    }

    /// Number of denoising steps N.
    pub fn n_steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    pub fn sigma(&self, i: usize) -> T {
        self.sigmas[i]
    }

    pub fn sigma_max(&self) -> T {
        self.sigmas[0]
    }

    pub fn sigmas(&self) -> &[T] {
        &self.sigmas
    }
}
