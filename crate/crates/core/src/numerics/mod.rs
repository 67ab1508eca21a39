//! Dense latent grids, the seeded Gaussian source and the two masked
//! primitives the brush procedure is built from.

mod grid;
pub mod io;
mod ops;
mod rng;

pub use grid::{Grid, Shape};
pub use ops::{axpy_masked, gaussian_latent, lerp_masked};
pub use rng::{SeededRng, ALGORITHM_ID};
