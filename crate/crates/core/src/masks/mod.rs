//! Edit masks: weight rasters, PNG I/O, resampling to latent resolution and
//! the per-mask brush parameters.

mod edit;
mod png_io;
mod raster;

pub use edit::{mask_union_coverage, resolve_seed, EditMask, MaskParams, SeedSpec};
pub(crate) use png_io::encode_png as png_io_encode;
pub use png_io::{load_mask_png, save_mask_png};
pub use raster::{resample_to_latent, MaskRaster};
