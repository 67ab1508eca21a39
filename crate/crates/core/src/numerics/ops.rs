use super::{Grid, SeededRng, Shape};
use crate::masks::MaskRaster;
use crate::{Error, Result, Scalar};

/// Latent of i.i.d. `Normal(0, std²)` draws taken in element order from `rng`.
pub fn gaussian_latent<T: Scalar>(rng: &mut SeededRng, shape: Shape, std: f64) -> Result<Grid<T>> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::param(
            "std",
            format!("must be finite and >= 0, got {std}"),
        ));
    }
    if std == 0.0 {
        return Ok(Grid::zeros(shape));
    }
    let data = (0..shape.len())
        .map(|_| T::from_f64_lossy(rng.next_gaussian() * std))
        .collect();
    Ok(Grid::from_raw(shape, data))
}

fn check_mask<T: Scalar>(latent: &Grid<T>, mask: &MaskRaster) -> Result<()> {
    let s = latent.shape();
    if mask.height() != s.height() || mask.width() != s.width() {
        return Err(Error::Shape(format!(
            "mask is {}x{} but latent plane is {}x{}",
            mask.height(),
            mask.width(),
            s.height(),
            s.width()
        )));
    }
    Ok(())
}

/// `base + scale · add · mask`, the mask broadcast over channels.
///
/// Evaluated as `base + ((scale · add) · mask)` in the element type.
pub fn axpy_masked<T: Scalar>(
    base: &Grid<T>,
    add: &Grid<T>,
    scale: T,
    mask: &MaskRaster,
) -> Result<Grid<T>> {
    add.expect_shape(base.shape())?;
    check_mask(base, mask)?;
    if scale == T::zero() {
        return Ok(base.clone());
    }
    let plane = base.shape().plane();
    let weights = mask.weights();
    let data: Vec<T> = base
        .as_slice()
        .iter()
        .zip(add.as_slice())
        .enumerate()
        .map(|(idx, (&b, &a))| {
            let m = T::from_f64_lossy(weights[idx % plane] as f64);
            b + scale * a * m
        })
        .collect();
    finite(Grid::from_raw(base.shape(), data))
}

/// `branch · m + (1 − m) · base`. Pixels with `m == 0` copy `base` and pixels
/// with `m == 1` copy `branch` bit for bit, as does any pixel where the two
/// inputs are already bit-identical.
pub fn lerp_masked<T: Scalar>(
    base: &Grid<T>,
    branch: &Grid<T>,
    mask: &MaskRaster,
) -> Result<Grid<T>> {
    branch.expect_shape(base.shape())?;
    check_mask(base, mask)?;
    let plane = base.shape().plane();
    let weights = mask.weights();
    let data: Vec<T> = base
        .as_slice()
        .iter()
        .zip(branch.as_slice())
        .enumerate()
        .map(|(idx, (&b, &x))| {
            let w = weights[idx % plane];
            if w == 0.0 || x.bits() == b.bits() {
                b
            } else if w == 1.0 {
                x
            } else {
                let m = T::from_f64_lossy(w as f64);
                x * m + (T::one() - m) * b
            }
        })
        .collect();
    finite(Grid::from_raw(base.shape(), data))
}

fn finite<T: Scalar>(g: Grid<T>) -> Result<Grid<T>> {
    if g.is_finite() {
        Ok(g)
    } else {
        Err(Error::Shape(
            "operation produced a non-finite element".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape(c: usize, h: usize, w: usize) -> Shape {
        Shape::new(c, h, w).unwrap()
    }

    #[test]
    fn zero_std_gives_zeros() {
        let mut rng = SeededRng::new(7, 0);
        let g: Grid<f32> = gaussian_latent(&mut rng, shape(1, 2, 2), 0.0).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_latent_is_deterministic() {
        let a: Grid<f32> =
            gaussian_latent(&mut SeededRng::new(7, 0), shape(1, 64, 64), 1.0).unwrap();
        let b: Grid<f32> =
            gaussian_latent(&mut SeededRng::new(7, 0), shape(1, 64, 64), 1.0).unwrap();
        assert!(a.bit_eq(&b));
    }

    // n = 65536: sd(mean) = 1/256, sd(sample sd) ~ 1/sqrt(2n) = 0.0028.
    // Four sigma bounds are 0.0156 and 0.011, inside the 0.02 tolerance.
    #[test]
    fn gaussian_latent_moments() {
        let g: Grid<f32> =
            gaussian_latent(&mut SeededRng::new(7, 0), shape(1, 256, 256), 1.0).unwrap();
        let n = g.len() as f64;
        let mean = g.as_slice().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = g
            .as_slice()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn negative_std_rejected() {
        let r: Result<Grid<f32>> = gaussian_latent(&mut SeededRng::new(1, 0), shape(1, 1, 1), -1.0);
        assert!(matches!(r, Err(Error::Parameter { .. })));
    }

    #[test]
    fn axpy_hand_value() {
        let s = shape(1, 1, 2);
        let base = Grid::filled(s, 0.5f32);
        let add = Grid::filled(s, 2.0f32);
        let mask = MaskRaster::new(1, 2, vec![1.0, 0.0]).unwrap();
        let out = axpy_masked(&base, &add, 0.5, &mask).unwrap();
        assert_eq!(out.as_slice(), &[1.5, 0.5]);
    }

    #[test]
    fn axpy_zero_scale_and_full_mask() {
        let s = shape(2, 2, 2);
        let base = gaussian_latent::<f32>(&mut SeededRng::new(1, 0), s, 1.0).unwrap();
        let add = gaussian_latent::<f32>(&mut SeededRng::new(2, 0), s, 1.0).unwrap();
        let ones = MaskRaster::filled(2, 2, 1.0).unwrap();
        assert!(axpy_masked(&base, &add, 0.0, &ones).unwrap().bit_eq(&base));
        let sum = axpy_masked(&base, &add, 1.0, &ones).unwrap();
        for ((o, b), a) in sum
            .as_slice()
            .iter()
            .zip(base.as_slice())
            .zip(add.as_slice())
        {
            assert_eq!(*o, b + a);
        }
    }

    #[test]
    fn mask_dims_must_match() {
        let s = shape(1, 2, 2);
        let g = Grid::<f32>::zeros(s);
        let m = MaskRaster::filled(2, 3, 1.0).unwrap();
        assert!(matches!(axpy_masked(&g, &g, 1.0, &m), Err(Error::Shape(_))));
        assert!(matches!(lerp_masked(&g, &g, &m), Err(Error::Shape(_))));
        let other = Grid::<f32>::zeros(shape(2, 2, 2));
        let m = MaskRaster::filled(2, 2, 1.0).unwrap();
        assert!(matches!(lerp_masked(&g, &other, &m), Err(Error::Shape(_))));
    }

    #[test]
    fn lerp_hand_value_and_endpoints() {
        let s = shape(1, 1, 1);
        let base = Grid::filled(s, 0.0f32);
        let branch = Grid::filled(s, 4.0f32);
        let quarter = MaskRaster::filled(1, 1, 0.25).unwrap();
        assert_eq!(
            lerp_masked(&base, &branch, &quarter).unwrap().as_slice(),
            &[1.0]
        );

        let s = shape(3, 4, 4);
        let base = gaussian_latent::<f32>(&mut SeededRng::new(3, 0), s, 1.0).unwrap();
        let branch = gaussian_latent::<f32>(&mut SeededRng::new(4, 0), s, 1.0).unwrap();
        let zeros = MaskRaster::filled(4, 4, 0.0).unwrap();
        let ones = MaskRaster::filled(4, 4, 1.0).unwrap();
        assert!(lerp_masked(&base, &branch, &zeros).unwrap().bit_eq(&base));
        assert!(lerp_masked(&base, &branch, &ones).unwrap().bit_eq(&branch));
    }

    fn arb_mask(h: usize, w: usize) -> impl Strategy<Value = MaskRaster> {
        prop::collection::vec(prop_oneof![Just(0.0f32), Just(1.0f32), 0.0f32..=1.0], h * w)
            .prop_map(move |v| MaskRaster::new(h, w, v).unwrap())
    }

    proptest! {
        #[test]
        fn merge_with_self_is_identity(seed in any::<u64>(), mask in arb_mask(3, 5)) {
            let x = gaussian_latent::<f32>(&mut SeededRng::new(seed, 0), shape(2, 3, 5), 2.0).unwrap();
            prop_assert!(lerp_masked(&x, &x, &mask).unwrap().bit_eq(&x));
        }

        #[test]
        fn merge_of_zero_injection_is_identity(seed in any::<u64>(), mask in arb_mask(4, 4)) {
            let s = shape(2, 4, 4);
            let x = gaussian_latent::<f64>(&mut SeededRng::new(seed, 0), s, 1.0).unwrap();
            let eps = gaussian_latent::<f64>(&mut SeededRng::new(seed, 1), s, 1.0).unwrap();
            let branch = axpy_masked(&x, &eps, 0.0, &mask).unwrap();
            prop_assert!(lerp_masked(&x, &branch, &mask).unwrap().bit_eq(&x));
        }

        #[test]
        fn ops_are_deterministic(seed in any::<u64>(), scale in -3.0f32..3.0, mask in arb_mask(2, 3)) {
            let s = shape(1, 2, 3);
            let a = gaussian_latent::<f32>(&mut SeededRng::new(seed, 0), s, 1.0).unwrap();
            let b = gaussian_latent::<f32>(&mut SeededRng::new(seed, 1), s, 1.0).unwrap();
            prop_assert!(axpy_masked(&a, &b, scale, &mask).unwrap().bit_eq(&axpy_masked(&a, &b, scale, &mask).unwrap()));
            prop_assert!(lerp_masked(&a, &b, &mask).unwrap().bit_eq(&lerp_masked(&a, &b, &mask).unwrap()));
        }
    }
}
