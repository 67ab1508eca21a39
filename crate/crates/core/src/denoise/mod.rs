//! The denoiser contract `D(x, σ, prompt)` and its implementations.

mod backend;
mod gmm;
pub mod mock;
mod remote;
pub mod wire;

use std::sync::Arc;

pub use backend::Backend;
pub use gmm::{
    analytic_denoise, analytic_score, AnalyticDenoiser, Component, GaussianMixture, MeanSpec,
};
pub use remote::RemoteDenoiser;

use crate::{Grid, Result, Scalar};

/// Pure map from a noisy latent at level `sigma` to an estimate of the clean
/// latent. Output shape must equal input shape. Implementations may be called
/// concurrently from different runs.
pub trait Denoiser<T: Scalar>: Send + Sync {
    fn denoise(&self, x: &Grid<T>, sigma: T, prompt: &str) -> Result<Grid<T>>;
}

impl<T: Scalar, D: Denoiser<T> + ?Sized> Denoiser<T> for Arc<D> {
    fn denoise(&self, x: &Grid<T>, sigma: T, prompt: &str) -> Result<Grid<T>> {
        (**self).denoise(x, sigma, prompt)
    }
}

impl<T: Scalar, D: Denoiser<T> + ?Sized> Denoiser<T> for &D {
    fn denoise(&self, x: &Grid<T>, sigma: T, prompt: &str) -> Result<Grid<T>> {
        (**self).denoise(x, sigma, prompt)
    }
}

impl<T: Scalar, D: Denoiser<T> + ?Sized> Denoiser<T> for Box<D> {
    fn denoise(&self, x: &Grid<T>, sigma: T, prompt: &str) -> Result<Grid<T>> {
        (**self).denoise(x, sigma, prompt)
    }
}

/// `D(x, σ) = x`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityDenoiser;

impl<T: Scalar> Denoiser<T> for IdentityDenoiser {
    fn denoise(&self, x: &Grid<T>, _sigma: T, _prompt: &str) -> Result<Grid<T>> {
        Ok(x.clone())
    }
}
