//! Edit statistics over latents.

use crate::masks::MaskRaster;
use crate::{Error, Grid, Result, Scalar};

/// RMS of `edited − base` inside (`mask > 0.5`) and outside the mask.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EditMagnitude {
    pub in_mask_rms: f64,
    pub out_mask_rms: f64,
}

fn check<T: Scalar>(a: &Grid<T>, b: &Grid<T>, mask: &MaskRaster) -> Result<()> {
    b.expect_shape(a.shape())?;
    if mask.height() != a.shape().height() || mask.width() != a.shape().width() {
        return Err(Error::Shape(format!(
            "mask {}x{} does not match latent {}",
            mask.height(),
            mask.width(),
            a.shape()
        )));
    }
    Ok(())
}

fn rms(sum_sq: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        (sum_sq / count as f64).sqrt()
    }
}

pub fn edit_magnitude<T: Scalar>(
    base: &Grid<T>,
    edited: &Grid<T>,
    mask: &MaskRaster,
) -> Result<EditMagnitude> {
    check(base, edited, mask)?;
    let plane = base.shape().plane();
    let (mut in_sq, mut in_n, mut out_sq, mut out_n) = (0.0, 0, 0.0, 0);
    for (idx, (b, e)) in base.as_slice().iter().zip(edited.as_slice()).enumerate() {
        let d = e.as_f64() - b.as_f64();
        if mask.weights()[idx % plane] > 0.5 {
            in_sq += d * d;
            in_n += 1;
        } else {
            out_sq += d * d;
            out_n += 1;
        }
    }
    Ok(EditMagnitude {
        in_mask_rms: rms(in_sq, in_n),
        out_mask_rms: rms(out_sq, out_n),
    })
}

/// RMS inside the mask of the high-frequency part of `latent − target`: the
/// residual minus its 3×3 box blur (edges clamped), per channel.
pub fn highpass_residual_rms<T: Scalar>(
    latent: &Grid<T>,
    target: &Grid<T>,
    mask: &MaskRaster,
) -> Result<f64> {
    check(latent, target, mask)?;
    let s = latent.shape();
    let (h, w) = (s.height(), s.width());
    let residual: Vec<f64> = latent
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| a.as_f64() - b.as_f64())
        .collect();
    let (mut sum_sq, mut count) = (0.0, 0usize);
    for c in 0..s.channels() {
        let ch = &residual[c * h * w..(c + 1) * h * w];
        for r in 0..h {
            for col in 0..w {
                if mask.get(r, col) <= 0.5 {
                    continue;
                }
                let mut blur = 0.0;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let rr = (r as i64 + dr).clamp(0, h as i64 - 1) as usize;
                        let cc = (col as i64 + dc).clamp(0, w as i64 - 1) as usize;
                        blur += ch[rr * w + cc];
                    }
                }
                let hp = ch[r * w + col] - blur / 9.0;
                sum_sq += hp * hp;
                count += 1;
            }
        }
    }
    Ok(rms(sum_sq, count))
}
