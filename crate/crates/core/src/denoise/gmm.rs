use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Denoiser;
use crate::{Error, Grid, Result, Scalar, Shape};

/// Component mean: a full vector, or one value repeated over the latent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeanSpec {
    Fill(f64),
    Full(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: MeanSpec,
    /// Isotropic per-element variance.
    pub variance: f64,
}

#[derive(Serialize, Deserialize)]
struct RawMixture {
    shape: Shape,
    components: Vec<Component>,
}

/// Isotropic Gaussian mixture over latents of one shape.
///
/// Noising the data with `N(0, σ²I)` gives the same mixture with every
/// variance inflated by `σ²`, so the posterior mean and score are closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct GaussianMixture {
    shape: Shape,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl TryFrom<RawMixture> for GaussianMixture {
    type Error = Error;

    fn try_from(raw: RawMixture) -> Result<Self> {
        GaussianMixture::new(raw.shape, raw.components)
    }
}

impl From<GaussianMixture> for RawMixture {
    fn from(g: GaussianMixture) -> Self {
        RawMixture {
            shape: g.shape,
            components: g.components(),
        }
    }
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl GaussianMixture {
    pub fn new(shape: Shape, components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::param(
                "components",
                "at least one component is required",
            ));
        }
        let d = shape.len();
        let mut weights = Vec::with_capacity(components.len());
        let mut means = Vec::with_capacity(components.len());
        let mut variances = Vec::with_capacity(components.len());
        for (i, c) in components.into_iter().enumerate() {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::param(
                    format!("components[{i}].weight"),
                    "must be positive",
                ));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::param(
                    format!("components[{i}].variance"),
                    "must be positive",
                ));
            }
            let mean = match c.mean {
                MeanSpec::Fill(v) => vec![v; d],
                MeanSpec::Full(v) if v.len() == d => v,
                MeanSpec::Full(v) => {
                    return Err(Error::param(
                        format!("components[{i}].mean"),
                        format!("length {} does not match shape {shape}", v.len()),
                    ))
                }
            };
            if mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::param(
                    format!("components[{i}].mean"),
                    "must be finite",
                ));
            }
            weights.push(c.weight);
            means.push(mean);
            variances.push(c.variance);
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::param(
                "components",
                format!("weights sum to {total}, expected 1"),
            ));
        }
        Ok(GaussianMixture {
            shape,
            weights,
            means,
            variances,
        })
    }

    /// A single isotropic Gaussian.
    pub fn gaussian(shape: Shape, mean: f64, variance: f64) -> Result<Self> {
        Self::new(
            shape,
            vec![Component {
                weight: 1.0,
                mean: MeanSpec::Fill(mean),
                variance,
            }],
        )
    }

    /// `count` equally weighted components whose means are smooth cosine
    /// patterns of amplitude 1, so rendered samples show visible structure.
    pub fn patterns(shape: Shape, count: usize, variance: f64) -> Result<Self> {
        const FREQS: [(f64, f64); 8] = [
            (1.0, 0.0),
            (0.0, 1.0),
            (1.0, 1.0),
            (1.0, -1.0),
            (2.0, 0.0),
            (0.0, 2.0),
            (2.0, 1.0),
            (1.0, 2.0),
        ];
        let (h, w) = (shape.height() as f64, shape.width() as f64);
        let components = (0..count)
            .map(|k| {
                let (fx, fy) = FREQS[k % FREQS.len()];
                let sign = if (k / FREQS.len()).is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                };
                let mut mean = Vec::with_capacity(shape.len());
                for c in 0..shape.channels() {
                    let phase = c as f64 * std::f64::consts::FRAC_PI_3;
                    for i in 0..shape.height() {
                        for j in 0..shape.width() {
                            let u = (j as f64 + 0.5) / w;
                            let v = (i as f64 + 0.5) / h;
                            let arg = std::f64::consts::PI * (fx * u + fy * v) + phase;
                            mean.push(sign * arg.cos());
                        }
                    }
                }
                Component {
                    weight: 1.0 / count as f64,
                    mean: MeanSpec::Full(mean),
                    variance,
                }
            })
            .collect();
        Self::new(shape, components)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k]
    }

    pub fn variance(&self, k: usize) -> f64 {
        self.variances[k]
    }

    pub fn components(&self) -> Vec<Component> {
        (0..self.len())
            .map(|k| Component {
                weight: self.weights[k],
                mean: MeanSpec::Full(self.means[k].clone()),
                variance: self.variances[k],
            })
            .collect()
    }

    fn check<T: Scalar>(&self, x: &Grid<T>, sigma: T) -> Result<f64> {
        x.expect_shape(self.shape)?;
        let s = sigma.as_f64();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::param(
                "sigma",
                format!("must be positive and finite, got {s}"),
            ));
        }
        Ok(s * s)
    }

    /// Component responsibilities of `x` under the mixture with variances
    /// inflated by `sigma2`, via log-sum-exp.
    pub fn responsibilities<T: Scalar>(&self, x: &Grid<T>, sigma2: f64) -> Vec<f64> {
        let d = self.shape.len() as f64;
        let logits: Vec<f64> = (0..self.len())
            .map(|k| {
                let var = self.variances[k] + sigma2;
                let sq: f64 = x
                    .as_slice()
                    .iter()
                    .zip(&self.means[k])
                    .map(|(&xi, &mi)| {
                        let diff = xi.as_f64() - mi;
                        diff * diff
                    })
                    .sum();
                self.weights[k].ln() - 0.5 * d * var.ln() - sq / (2.0 * var)
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    /// Posterior mean `E[x₀ | x]` at noise level `sigma`.
    pub fn denoise<T: Scalar>(&self, x: &Grid<T>, sigma: T) -> Result<Grid<T>> {
        let s2 = self.check(x, sigma)?;
        let resp = self.responsibilities(x, s2);
        let data = x
            .as_slice()
            .iter()
            .enumerate()
            .map(|(j, &xj)| {
                let xj = xj.as_f64();
                let v: f64 = (0..self.len())
                    .map(|k| {
                        let vk = self.variances[k];
                        resp[k] * (vk * xj + s2 * self.means[k][j]) / (vk + s2)
                    })
                    .sum();
                T::from_f64_lossy(v)
            })
            .collect();
        Grid::from_vec(self.shape, data)
    }

    /// `∇ₓ log p(x; σ) = Σₖ rₖ(x) (μₖ − x) / (vₖ + σ²)`.
    pub fn score<T: Scalar>(&self, x: &Grid<T>, sigma: T) -> Result<Grid<T>> {
        let s2 = self.check(x, sigma)?;
        let resp = self.responsibilities(x, s2);
        let data = x
            .as_slice()
            .iter()
            .enumerate()
            .map(|(j, &xj)| {
                let xj = xj.as_f64();
                let v: f64 = (0..self.len())
                    .map(|k| resp[k] * (self.means[k][j] - xj) / (self.variances[k] + s2))
                    .sum();
                T::from_f64_lossy(v)
            })
            .collect();
        Grid::from_vec(self.shape, data)
    }

    /// Responsibility-weighted component mean under the clean data density:
    /// the structure a clean sample near `x` should have.
    pub fn component_target<T: Scalar>(&self, x: &Grid<T>) -> Result<Grid<T>> {
        x.expect_shape(self.shape)?;
        let resp = self.responsibilities(x, 0.0);
        let data = (0..self.shape.len())
            .map(|j| T::from_f64_lossy((0..self.len()).map(|k| resp[k] * self.means[k][j]).sum()))
            .collect();
        Grid::from_vec(self.shape, data)
    }

    /// Index of the most responsible component under the clean density.
    pub fn classify<T: Scalar>(&self, x: &Grid<T>) -> usize {
        self.responsibilities(x, 0.0)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &r)| {
                if r > best.1 {
                    (k, r)
                } else {
                    best
                }
            })
            .0
    }
}

pub fn analytic_denoise<T: Scalar>(
    gmm: &GaussianMixture,
    x: &Grid<T>,
    sigma: T,
) -> Result<Grid<T>> {
    gmm.denoise(x, sigma)
}

pub fn analytic_score<T: Scalar>(gmm: &GaussianMixture, x: &Grid<T>, sigma: T) -> Result<Grid<T>> {
    gmm.score(x, sigma)
}

#[derive(Deserialize)]
struct AnalyticConfig {
    #[serde(flatten)]
    default: GaussianMixture,
    #[serde(default)]
    prompts: BTreeMap<String, GaussianMixture>,
}

/// Closed-form denoiser over a default mixture, optionally switching to a
/// named mixture when the prompt matches one exactly. Any other prompt is
/// ignored.
#[derive(Clone, Debug)]
pub struct AnalyticDenoiser {
    default: GaussianMixture,
    prompts: BTreeMap<String, GaussianMixture>,
}

impl AnalyticDenoiser {
    pub fn new(default: GaussianMixture) -> Self {
        AnalyticDenoiser {
            default,
            prompts: BTreeMap::new(),
        }
    }

    pub fn with_prompt(mut self, prompt: impl Into<String>, gmm: GaussianMixture) -> Self {
        self.prompts.insert(prompt.into(), gmm);
        self
    }

    /// Reads a mixture document, optionally with a `prompts` map of further
    /// mixtures keyed by prompt string.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: AnalyticConfig = serde_json::from_slice(bytes)?;
        Ok(AnalyticDenoiser {
            default: cfg.default,
            prompts: cfg.prompts,
        })
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read(path)?)
    }

    pub fn mixture(&self, prompt: &str) -> &GaussianMixture {
        self.prompts.get(prompt).unwrap_or(&self.default)
    }

    pub fn shape(&self) -> Shape {
        self.default.shape
    }
}

impl<T: Scalar> Denoiser<T> for AnalyticDenoiser {
    fn denoise(&self, x: &Grid<T>, sigma: T, prompt: &str) -> Result<Grid<T>> {
        self.mixture(prompt).denoise(x, sigma)
    }
}

impl<T: Scalar> Denoiser<T> for GaussianMixture {
    fn denoise(&self, x: &Grid<T>, sigma: T, _prompt: &str) -> Result<Grid<T>> {
        GaussianMixture::denoise(self, x, sigma)
    }
}
