use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major weight field with every weight in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRaster")]
pub struct MaskRaster {
    height: usize,
    width: usize,
    weights: Vec<f32>,
}

#[derive(Deserialize)]
struct RawRaster {
    height: usize,
    width: usize,
    weights: Vec<f32>,
}

impl TryFrom<RawRaster> for MaskRaster {
    type Error = Error;

    fn try_from(raw: RawRaster) -> Result<Self> {
        MaskRaster::new(raw.height, raw.width, raw.weights)
    }
}

impl MaskRaster {
    pub fn new(height: usize, width: usize, weights: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "mask dimensions must be positive, got {height}x{width}"
            )));
        }
        if weights.len() != height * width {
            return Err(Error::Shape(format!(
                "{} weights for a {height}x{width} mask",
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::param(
                "weights",
                format!("weight {} at {i} outside [0, 1]", weights[i]),
            ));
        }
        Ok(MaskRaster {
            height,
            width,
            weights,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Binary mask that is 1 where `pred(row, col)` holds.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut pred: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut weights = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                weights.push(pred(r, c));
            }
        }
        Self::new(height, width, weights)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.weights[row * self.width + col]
    }

    pub fn is_binary(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0 || w == 1.0)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.weights
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &w| {
                (lo.min(w), hi.max(w))
            })
    }
}

/// Per-axis resampling matrix, `dst × src`, rows summing to one.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    if src == dst {
        return (0..dst).map(|i| vec![(i, 1.0)]).collect();
    }
    if dst < src {
        // Area average: destination cell j covers [j·s, (j+1)·s) in source units.
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|j| {
                let (lo, hi) = (j as f64 * scale, (j + 1) as f64 * scale);
                let first = lo.floor() as usize;
                let last = (hi.ceil() as usize).min(src);
                (first..last)
                    .filter_map(|i| {
                        let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                        (overlap > 0.0).then_some((i, overlap / scale))
                    })
                    .collect()
            })
            .collect()
    } else {
        // Bilinear, pixel centres aligned, edges clamped.
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|j| {
                let pos = ((j as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = pos.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                let frac = pos - i0 as f64;
                if i0 == i1 || frac == 0.0 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - frac), (i1, frac)]
                }
            })
            .collect()
    }
}

/// Resamples to `target_h × target_w`: area averaging along axes that shrink,
/// bilinear along axes that grow. Output stays within the input's value range.
pub fn resample_to_latent(
    mask: &MaskRaster,
    target_h: usize,
    target_w: usize,
) -> Result<MaskRaster> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::param(
            "target",
            format!("dimensions must be positive, got {target_h}x{target_w}"),
        ));
    }
    if target_h == mask.height && target_w == mask.width {
        return Ok(mask.clone());
    }
    let rows = axis_weights(mask.height, target_h);
    let cols = axis_weights(mask.width, target_w);
    let (lo, hi) = mask.min_max();

    // Horizontal pass into a height × target_w buffer, then vertical.
    let mut tmp = vec![0.0f64; mask.height * target_w];
    for r in 0..mask.height {
        let src = &mask.weights[r * mask.width..(r + 1) * mask.width];
        for (j, taps) in cols.iter().enumerate() {
            tmp[r * target_w + j] = taps.iter().map(|&(i, w)| w * src[i] as f64).sum();
        }
    }
    let mut out = Vec::with_capacity(target_h * target_w);
    for taps in &rows {
        for j in 0..target_w {
            let v: f64 = taps.iter().map(|&(r, w)| w * tmp[r * target_w + j]).sum();
            out.push((v as f32).clamp(lo, hi));
        }
    }
    MaskRaster::new(target_h, target_w, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn out_of_range_weight_rejected() {
        assert!(MaskRaster::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(MaskRaster::new(1, 2, vec![0.5, f32::NAN]).is_err());
        assert!(MaskRaster::new(1, 2, vec![0.5]).is_err());
        assert!(
            serde_json::from_str::<MaskRaster>(r#"{"height":1,"width":1,"weights":[2.0]}"#)
                .is_err()
        );
    }

    #[test]
    fn area_average_two_by_two() {
        let m = MaskRaster::new(2, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let r = resample_to_latent(&m, 1, 1).unwrap();
        assert_eq!(r.weights(), &[0.5]);
    }

    #[test]
    fn identity_dims_bit_identical() {
        let m = MaskRaster::new(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(resample_to_latent(&m, 2, 3).unwrap(), m);
    }

    #[test]
    fn non_integer_ratio_area_weights() {
        // 3 -> 2: cell 0 covers source [0, 1.5), cell 1 covers [1.5, 3).
        let m = MaskRaster::new(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let r = resample_to_latent(&m, 1, 2).unwrap();
        approx::assert_relative_eq!(r.weights()[0], 2.0 / 3.0, max_relative = 1e-6);
        assert_eq!(r.weights()[1], 0.0);
    }

    #[test]
    fn zero_target_rejected() {
        let m = MaskRaster::filled(2, 2, 1.0).unwrap();
        assert!(resample_to_latent(&m, 0, 2).is_err());
    }

    proptest! {
        #[test]
        fn constant_is_preserved(c in 0.0f32..=1.0, h in 1usize..40, w in 1usize..40, th in 1usize..40, tw in 1usize..40) {
            let m = MaskRaster::filled(h, w, c).unwrap();
            let r = resample_to_latent(&m, th, tw).unwrap();
            prop_assert!(r.weights().iter().all(|&v| v == c));
        }

        #[test]
        fn range_contracts(
            (h, w, weights) in (1usize..24, 1usize..24).prop_flat_map(|(h, w)| {
                (Just(h), Just(w), prop::collection::vec(0.0f32..=1.0, h * w))
            }),
            th in 1usize..24,
            tw in 1usize..24,
        ) {
            let m = MaskRaster::new(h, w, weights).unwrap();
            let (lo, hi) = m.min_max();
            let r = resample_to_latent(&m, th, tw).unwrap();
            let (rlo, rhi) = r.min_max();
            prop_assert!(rlo >= lo && rhi <= hi);
        }
    }
}
