//! Latent previews and labelled image grids.

use png::ColorType;

use crate::masks::png_io_encode;
use crate::{Latent, Result};

/// 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        RgbImage {
            width,
            height,
            pixels: fill
                .iter()
                .copied()
                .cycle()
                .take(width * height * 3)
                .collect(),
        }
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        if x < self.width && y < self.height {
            let i = (y * self.width + x) * 3;
            self.pixels[i..i + 3].copy_from_slice(&rgb);
        }
    }

    pub fn paste(&mut self, other: &RgbImage, x0: usize, y0: usize) {
        for y in 0..other.height {
            for x in 0..other.width {
                let i = (y * other.width + x) * 3;
                self.put(
                    x0 + x,
                    y0 + y,
                    [other.pixels[i], other.pixels[i + 1], other.pixels[i + 2]],
                );
            }
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        png_io_encode(
            self.width as u32,
            self.height as u32,
            ColorType::Rgb,
            &self.pixels,
        )
    }
}

/// Per-channel min–max normalised rendering, each latent cell drawn as a
/// `scale × scale` block. One channel renders gray, two as red/green, three
/// or more as RGB from the first three. A constant channel renders black.
pub fn render_latent(latent: &Latent, scale: usize) -> RgbImage {
    let scale = scale.max(1);
    let s = latent.shape();
    let (h, w) = (s.height(), s.width());
    let plane = s.plane();
    let data = latent.as_slice();
    let normalised: Vec<Vec<u8>> = (0..s.channels().min(3))
        .map(|c| {
            let ch = &data[c * plane..(c + 1) * plane];
            let (lo, hi) = ch
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            ch.iter()
                .map(|&v| {
                    if hi > lo {
                        (((v - lo) / (hi - lo)) * 255.0).round() as u8
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    let mut img = RgbImage::new(w * scale, h * scale, [0, 0, 0]);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let rgb = match normalised.len() {
                1 => [normalised[0][i]; 3],
                2 => [normalised[0][i], normalised[1][i], 0],
                _ => [normalised[0][i], normalised[1][i], normalised[2][i]],
            };
            for dy in 0..scale {
                for dx in 0..scale {
                    img.put(c * scale + dx, r * scale + dy, rgb);
                }
            }
        }
    }
    img
}

/// Upscale factor that brings small latents to roughly 128 pixels across.
pub fn display_scale(shape: crate::Shape) -> usize {
    (128 / shape.height().max(shape.width())).max(1)
}

pub fn render_png(latent: &Latent, scale: usize) -> Result<Vec<u8>> {
    render_latent(latent, scale).to_png()
}

// 3×5 glyphs, one row per u8 (low 3 bits, MSB left).
fn glyph(ch: char) -> [u8; 5] {
    match ch {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        '=' => [0, 7, 0, 7, 0],
        '-' => [0, 0, 7, 0, 0],
        'a' => [0, 7, 1, 7, 7],
        'n' => [0, 6, 5, 5, 5],
        's' => [0, 7, 4, 1, 7],
        'b' => [4, 4, 7, 5, 7],
        'e' => [0, 7, 7, 4, 7],
        'r' => [0, 6, 4, 4, 4],
        _ => [0; 5],
    }
}

pub const GLYPH_W: usize = 4;
pub const GLYPH_H: usize = 6;

/// Draws `text` at `(x0, y0)` in the built-in 3×5 font, `zoom`× enlarged.
pub fn draw_text(img: &mut RgbImage, text: &str, x0: usize, y0: usize, zoom: usize, rgb: [u8; 3]) {
    for (k, ch) in text.chars().enumerate() {
        let rows = glyph(ch.to_ascii_lowercase());
        for (ry, bits) in rows.iter().enumerate() {
            for rx in 0..3 {
                if bits & (4 >> rx) != 0 {
                    for dy in 0..zoom {
                        for dx in 0..zoom {
                            img.put(
                                x0 + (k * GLYPH_W + rx) * zoom + dx,
                                y0 + ry * zoom + dy,
                                rgb,
                            );
                        }
                    }
                }
            }
        }
    }
}

/// Lays out `rows` of labelled cells on a white canvas, each label above its
/// image. Cells are placed by position, so the result does not depend on
/// the order in which they were produced.
pub fn assemble_grid(rows: &[Vec<(RgbImage, String)>]) -> RgbImage {
    const PAD: usize = 4;
    const ZOOM: usize = 2;
    let cell_w = rows
        .iter()
        .flatten()
        .map(|(img, label)| img.width.max(label.len() * GLYPH_W * ZOOM))
        .max()
        .unwrap_or(1);
    let img_h = rows
        .iter()
        .flatten()
        .map(|(img, _)| img.height)
        .max()
        .unwrap_or(1);
    let cell_h = GLYPH_H * ZOOM + PAD + img_h;
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut canvas = RgbImage::new(
        PAD + cols * (cell_w + PAD),
        PAD + rows.len() * (cell_h + PAD),
        [255, 255, 255],
    );
    for (r, row) in rows.iter().enumerate() {
        for (c, (img, label)) in row.iter().enumerate() {
            let x = PAD + c * (cell_w + PAD);
            let y = PAD + r * (cell_h + PAD);
            draw_text(&mut canvas, label, x, y, ZOOM, [0, 0, 0]);
            canvas.paste(img, x, y + GLYPH_H * ZOOM + PAD);
        }
    }
    canvas
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Shape;

    #[test]
    fn gray_min_max_normalisation() {
        let l = Latent::from_vec(Shape::new(1, 1, 3).unwrap(), vec![-1.0, 0.0, 1.0]).unwrap();
        let img = render_latent(&l, 1);
        assert_eq!(img.pixels, vec![0, 0, 0, 128, 128, 128, 255, 255, 255]);
    }

    #[test]
    fn scale_replicates_cells() {
        let l = Latent::from_vec(Shape::new(3, 1, 1).unwrap(), vec![0.0, 1.0, 2.0]).unwrap();
        let img = render_latent(&l, 2);
        assert_eq!((img.width, img.height), (2, 2));
        assert!(img.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn grid_dimensions() {
        let cell = RgbImage::new(10, 10, [1, 2, 3]);
        let rows = vec![
            vec![(cell.clone(), "a=1".into()), (cell.clone(), "a=2".into())],
            vec![(cell, "n=5".into())],
        ];
        let g = assemble_grid(&rows);
        assert_eq!(g.width, 4 + 2 * (24 + 4));
        assert_eq!(g.height, 4 + 2 * (12 + 4 + 10 + 4));
        assert!(!g.to_png().unwrap().is_empty());
    }
}
