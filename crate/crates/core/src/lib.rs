//! Region-targeted diffusion editing.
//!
//! The engine runs a stochastic Euler sampler over a latent, and for every
//! enabled [`EditMask`] forks a branch trajectory at the mask's injection step,
//! adds freshly seeded noise inside the mask, denoises the branch on its own
//! seed stream and finally merges it back into the base trajectory at the
//! merge step. Everything outside the masks stays on the original trajectory
//! up to the merge.
//!
//! The math is generic over [`Scalar`] (`f32`/`f64`). The wire protocol,
//! persistence and rendering work on the 32-bit [`Latent`] alias.

pub mod denoise;
pub mod error;
pub mod masks;
pub mod numerics;
pub mod render;
pub mod sampler;
pub mod scalar;
pub mod schedule;

pub use denoise::{AnalyticDenoiser, Denoiser, GaussianMixture, IdentityDenoiser};
pub use error::{Error, Result};
pub use masks::{EditMask, MaskRaster, SeedSpec};
pub use numerics::{Grid, SeededRng, Shape};
pub use sampler::{BrushJob, RunTrace, SamplerParams};
pub use scalar::Scalar;
pub use schedule::{KarrasParams, SigmaSchedule};

/// 32-bit latent, the precision used on the wire and on disk.
pub type Latent = Grid<f32>;
/// 64-bit latent, used where oracles need the headroom.
pub type Latent64 = Grid<f64>;
pub type Schedule = SigmaSchedule<f32>;
pub type Schedule64 = SigmaSchedule<f64>;
pub type Trace = RunTrace<f32>;
pub type Mixture = GaussianMixture;
