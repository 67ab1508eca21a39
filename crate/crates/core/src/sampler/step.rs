use super::SamplerParams;
use crate::denoise::Denoiser;
use crate::numerics::{gaussian_latent, SeededRng};
use crate::{Error, Grid, Result, Scalar, SigmaSchedule};

/// One stochastic Euler step from level `σ_i` to `σ_{i+1}`.
///
/// With `γ` from [`SamplerParams::gamma`] and `σ̂ = σ_i(1+γ)`:
/// `x̂ = x + √(σ̂² − σ_i²)·s_noise·ε`, `d = (x̂ − D(x̂, σ̂))/σ̂`, result
/// `x̂ + (σ_{i+1} − σ̂)·d`. When `γ = 0` nothing is drawn from `rng`. When
/// `σ_{i+1} = 0` the result is `D(x̂, σ̂)` itself.
pub fn euler_churn_step<T, D>(
    x: &Grid<T>,
    i: usize,
    sched: &SigmaSchedule<T>,
    params: &SamplerParams,
    denoiser: &D,
    prompt: &str,
    rng: &mut SeededRng,
) -> Result<Grid<T>>
where
    T: Scalar,
    D: Denoiser<T> + ?Sized,
{
    let n = sched.n_steps();
    if i >= n {
        return Err(Error::param(
            "step",
            format!("step {i} out of range for {n} steps"),
        ));
    }
    let sigma = sched.sigma(i);
    let sigma_next = sched.sigma(i + 1);
    let gamma = params.gamma(sigma.as_f64(), n);

    let (x_hat, sigma_hat) = if gamma > 0.0 {
        let sigma_hat = sigma * T::from_f64_lossy(1.0 + gamma);
        let std =
            (sigma_hat * sigma_hat - sigma * sigma).sqrt() * T::from_f64_lossy(params.s_noise);
        let eps: Grid<T> = gaussian_latent(rng, x.shape(), 1.0)?;
        let data = x
            .as_slice()
            .iter()
            .zip(eps.as_slice())
            .map(|(&xv, &e)| xv + std * e)
            .collect();
        (Grid::from_raw(x.shape(), data), sigma_hat)
    } else {
        (x.clone(), sigma)
    };

    let denoised = denoiser.denoise(&x_hat, sigma_hat, prompt)?;
    if denoised.shape() != x.shape() {
        return Err(Error::Shape(format!(
            "denoiser returned {} for a {} latent",
            denoised.shape(),
            x.shape()
        )));
    }
    let out = if sigma_next == T::zero() {
        denoised
    } else {
        let dt = sigma_next - sigma_hat;
        let data = x_hat
            .as_slice()
            .iter()
            .zip(denoised.as_slice())
            .map(|(&xh, &d)| xh + dt * ((xh - d) / sigma_hat))
            .collect();
        Grid::from_raw(x.shape(), data)
    };
    if !out.is_finite() {
        return Err(Error::Numerical {
            step: i,
            stream: String::new(),
        });
    }
    Ok(out)
}
