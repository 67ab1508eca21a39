//! Closed-form mixture denoiser against independent oracles: the noised
//! log-density by finite differences and the posterior-mean/score identity.

use brush_core::denoise::{analytic_denoise, analytic_score, Component, GaussianMixture, MeanSpec};
use brush_core::numerics::{gaussian_latent, SeededRng};
use brush_core::{AnalyticDenoiser, Denoiser, Grid, Latent64, Shape};

/// log p(x; σ) for the mixture, written out directly from the definition.
fn log_density(gmm: &GaussianMixture, x: &[f64], sigma: f64) -> f64 {
    let d = x.len() as f64;
    let terms: Vec<f64> = (0..gmm.len())
        .map(|k| {
            let var = gmm.variance(k) + sigma * sigma;
            let sq: f64 = x
                .iter()
                .zip(gmm.mean(k))
                .map(|(a, m)| (a - m) * (a - m))
                .sum();
            gmm.weights()[k].ln()
                - 0.5 * d * (2.0 * std::f64::consts::PI * var).ln()
                - sq / (2.0 * var)
        })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn random_case(case: u64) -> (GaussianMixture, Latent64, f64) {
    let mut rng = SeededRng::new(case, 99);
    let u = |rng: &mut SeededRng| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let dim = 1 + (rng.next_u64() % 6) as usize;
    let shape = Shape::new(1, 1, dim).unwrap();
    let k = 1 + (rng.next_u64() % 4) as usize;
    let raw: Vec<f64> = (0..k).map(|_| 0.1 + u(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    let components = raw
        .iter()
        .map(|w| Component {
            weight: w / total,
            mean: MeanSpec::Full((0..dim).map(|_| 3.0 * rng.next_gaussian()).collect()),
            variance: 0.05 + 2.0 * u(&mut rng),
        })
        .collect();
    let gmm = GaussianMixture::new(shape, components).unwrap();
    let x: Latent64 = gaussian_latent(&mut rng, shape, 3.0).unwrap();
    let sigma = 0.05 * 400f64.powf(u(&mut rng));
    (gmm, x, sigma)
}

#[test]
fn tweedie_identity_randomized() {
    for case in 0..200 {
        let (gmm, x, sigma) = random_case(case);
        let d = analytic_denoise(&gmm, &x, sigma).unwrap();
        let s = analytic_score(&gmm, &x, sigma).unwrap();
        let via_score: Vec<f64> = x
            .as_slice()
            .iter()
            .zip(s.as_slice())
            .map(|(a, g)| a + sigma * sigma * g)
            .collect();
        let diff: Vec<f64> = d
            .as_slice()
            .iter()
            .zip(&via_score)
            .map(|(a, b)| a - b)
            .collect();
        let scale = norm(d.as_slice()).max(norm(x.as_slice())).max(1e-12);
        assert!(
            norm(&diff) <= 1e-6 * scale,
            "case {case}: {} vs scale {scale}",
            norm(&diff)
        );
    }
}

#[test]
fn score_matches_central_differences() {
    for case in 0..200 {
        let (gmm, x, sigma) = random_case(case);
        let s = analytic_score(&gmm, &x, sigma).unwrap();
        let h = 1e-5 * (1.0 + sigma);
        let xs = x.as_slice().to_vec();
        let fd: Vec<f64> = (0..xs.len())
            .map(|j| {
                let mut plus = xs.clone();
                let mut minus = xs.clone();
                plus[j] += h;
                minus[j] -= h;
                (log_density(&gmm, &plus, sigma) - log_density(&gmm, &minus, sigma)) / (2.0 * h)
            })
            .collect();
        let diff: Vec<f64> = s.as_slice().iter().zip(&fd).map(|(a, b)| a - b).collect();
        let scale = norm(&fd).max(1e-8);
        assert!(
            norm(&diff) <= 1e-4 * scale,
            "case {case}: rel {}",
            norm(&diff) / scale
        );
    }
}

#[test]
fn small_sigma_leaves_data_points_in_place() {
    let shape = Shape::new(1, 2, 2).unwrap();
    let gmm = GaussianMixture::patterns(shape, 3, 0.5).unwrap();
    let sigma = 1e-4;
    for k in 0..gmm.len() {
        let x = Grid::from_vec(shape, gmm.mean(k).iter().map(|m| m + 0.3).collect()).unwrap();
        let d = analytic_denoise(&gmm, &x, sigma).unwrap();
        // |D − x| = σ² |Σ r (μ − x)/(v + σ²)| <= σ² · max|μ − x| / min v
        let max_gap = (0..gmm.len())
            .flat_map(|c| {
                gmm.mean(c)
                    .iter()
                    .zip(x.as_slice())
                    .map(|(m, a)| (m - a).abs())
            })
            .fold(0.0, f64::max);
        let bound = sigma * sigma * max_gap / 0.5;
        assert!(d.max_abs_diff(&x).unwrap() <= bound * (1.0 + 1e-9));
    }
}

#[test]
fn analytic_output_ignores_prompt() {
    let shape = Shape::new(1, 3, 3).unwrap();
    let den = AnalyticDenoiser::new(GaussianMixture::patterns(shape, 4, 0.1).unwrap());
    let x: Grid<f32> = gaussian_latent(&mut SeededRng::new(1, 0), shape, 2.0).unwrap();
    let a = den.denoise(&x, 1.5, "").unwrap();
    for prompt in ["a dog", "masterpiece portrait of a dog, medals", "🙂"] {
        assert!(den.denoise(&x, 1.5, prompt).unwrap().bit_eq(&a));
    }
}

#[test]
fn denoise_is_pure() {
    let (gmm, x, sigma) = random_case(7);
    let a = analytic_denoise(&gmm, &x, sigma).unwrap();
    let b = analytic_denoise(&gmm, &x, sigma).unwrap();
    assert!(a.bit_eq(&b));
    let x32: Grid<f32> = x.cast();
    let a32 = analytic_denoise(&gmm, &x32, sigma as f32).unwrap();
    assert!(a32.bit_eq(&analytic_denoise(&gmm, &x32, sigma as f32).unwrap()));
}
