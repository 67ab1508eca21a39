use std::io::Cursor;

use png::{BitDepth, ColorType, Decoder, Transformations};

use super::MaskRaster;
use crate::{Error, Result};

/// Decodes an 8-bit PNG into weights `pixel / 255`.
///
/// Grayscale uses luma, grayscale-alpha and RGBA use the alpha channel, RGB
/// uses Rec. 601 luma. Palette images and other bit depths are rejected.
pub fn load_mask_png(bytes: &[u8]) -> Result<MaskRaster> {
    let mut decoder = Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Decode(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Decode("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Decode(e.to_string()))?;
    if info.bit_depth != BitDepth::Eight {
        return Err(Error::Format(format!(
            "bit depth {:?}, expected 8",
            info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => return Err(Error::Format("palette images are not supported".into())),
    };
    let mut weights = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        for px in row[..w * channels].chunks_exact(channels) {
            let v = match channels {
                1 => px[0] as f32,
                2 => px[1] as f32,
                3 => (0.299 * px[0] as f32 + 0.587 * px[1] as f32 + 0.114 * px[2] as f32).round(),
                _ => px[3] as f32,
            };
            weights.push(v / 255.0);
        }
    }
    MaskRaster::new(h, w, weights)
}

/// Encodes as 8-bit grayscale, `round(weight · 255)`.
pub fn save_mask_png(mask: &MaskRaster) -> Result<Vec<u8>> {
    let pixels: Vec<u8> = mask
        .weights()
        .iter()
        .map(|&w| (w * 255.0).round() as u8)
        .collect();
    encode_png(
        mask.width() as u32,
        mask.height() as u32,
        ColorType::Grayscale,
        &pixels,
    )
}

pub(crate) fn encode_png(
    width: u32,
    height: u32,
    color: ColorType,
    pixels: &[u8],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(e.to_string()))?;
        writer
            .write_image_data(pixels)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(out)
}
