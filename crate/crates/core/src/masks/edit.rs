use serde::{Deserialize, Serialize};

use super::MaskRaster;
use crate::numerics::SeededRng;
use crate::{Error, Result};

/// A branch seed: a non-negative value, or `-1` for "draw one at run time".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct SeedSpec(i64);

impl SeedSpec {
    pub const RANDOM: SeedSpec = SeedSpec(-1);

    pub fn new(raw: i64) -> Result<Self> {
        if raw < -1 {
            return Err(Error::param(
                "seed",
                format!("must be >= 0 or -1, got {raw}"),
            ));
        }
        Ok(SeedSpec(raw))
    }

    pub fn fixed(seed: u64) -> Result<Self> {
        i64::try_from(seed)
            .map(SeedSpec)
            .map_err(|_| Error::param("seed", format!("{seed} exceeds i64::MAX")))
    }

    pub fn get(self) -> Option<u64> {
        (self.0 >= 0).then_some(self.0 as u64)
    }

    pub fn is_random(self) -> bool {
        self.0 == -1
    }

    /// The fixed value, or a fresh draw from `rng`.
    pub fn resolve(self, rng: &mut SeededRng) -> u64 {
        self.get().unwrap_or_else(|| rng.next_seed())
    }
}

impl TryFrom<i64> for SeedSpec {
    type Error = Error;

    fn try_from(raw: i64) -> Result<Self> {
        SeedSpec::new(raw)
    }
}

impl From<SeedSpec> for i64 {
    fn from(s: SeedSpec) -> i64 {
        s.0
    }
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::RANDOM
    }
}

/// Scalar parameters of one mask, the JSON form used by the HTTP API.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub id: String,
    pub inject_step: usize,
    pub strength: f64,
    #[serde(default)]
    pub branch_seed: SeedSpec,
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub z_order: i32,
}

fn yes() -> bool {
    true
}

impl MaskParams {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::param("id", "must not be empty"));
        }
        if !(self.strength.is_finite() && self.strength >= 0.0) {
            return Err(Error::param(
                "strength",
                format!("must be finite and >= 0, got {}", self.strength),
            ));
        }
        Ok(())
    }
}

/// A mask on the edit stack: where to inject (`raster`), when (`inject_step`),
/// how much (`strength`) and with which noise (`branch_seed`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditMask {
    #[serde(flatten)]
    pub params: MaskParams,
    pub raster: MaskRaster,
}

impl EditMask {
    pub fn new(
        id: impl Into<String>,
        raster: MaskRaster,
        inject_step: usize,
        strength: f64,
    ) -> Self {
        EditMask {
            params: MaskParams {
                id: id.into(),
                inject_step,
                strength,
                branch_seed: SeedSpec::RANDOM,
                enabled: true,
                z_order: 0,
            },
            raster,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.params.branch_seed = SeedSpec::fixed(seed).expect("seed fits in i64");
        self
    }

    pub fn with_z_order(mut self, z: i32) -> Self {
        self.params.z_order = z;
        self
    }

    pub fn disabled(mut self) -> Self {
        self.params.enabled = false;
        self
    }

    pub fn id(&self) -> &str {
        &self.params.id
    }

    pub fn enabled(&self) -> bool {
        self.params.enabled
    }
}

/// Returns the mask's seed, drawing one from `rng` and writing it back into
/// the mask when it was `-1`. Explicit seeds are never touched.
pub fn resolve_seed(mask: &mut EditMask, rng: &mut SeededRng) -> u64 {
    if let Some(seed) = mask.params.branch_seed.get() {
        return seed;
    }
    let seed = rng.next_seed();
    mask.params.branch_seed = SeedSpec(seed as i64);
    seed
}

/// Elementwise maximum over the enabled masks; all zeros if none is enabled.
pub fn mask_union_coverage(masks: &[EditMask], height: usize, width: usize) -> Result<MaskRaster> {
    let mut out = vec![0.0f32; height * width];
    for m in masks.iter().filter(|m| m.enabled()) {
        if m.raster.height() != height || m.raster.width() != width {
            return Err(Error::Shape(format!(
                "mask `{}` is {}x{}, expected {height}x{width}",
                m.id(),
                m.raster.height(),
                m.raster.width()
            )));
        }
        for (o, &w) in out.iter_mut().zip(m.raster.weights()) {
            *o = o.max(w);
        }
    }
    MaskRaster::new(height, width, out)
}
