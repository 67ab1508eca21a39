use std::time::{SystemTime, UNIX_EPOCH};

use brush_core::sampler::default_merge_step;
use brush_core::{BrushJob, EditMask, KarrasParams, MaskRaster, SamplerParams, SeedSpec, Shape};
use serde::{Deserialize, Serialize};

/// Optional overrides sent with `POST /sessions`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub latent_shape: Option<Shape>,
    pub schedule: Option<KarrasParams>,
    pub merge_step: Option<usize>,
    pub sampler: Option<SamplerParams>,
    pub trace_stride: Option<usize>,
}

/// Fully resolved job configuration of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub latent_shape: Shape,
    pub schedule: KarrasParams,
    pub merge_step: usize,
    pub sampler: SamplerParams,
    pub trace_stride: usize,
}

impl SessionConfig {
    pub fn resolve(patch: ConfigPatch, shape: Shape, schedule: KarrasParams) -> Self {
        let schedule = patch.schedule.unwrap_or(schedule);
        SessionConfig {
            latent_shape: patch.latent_shape.unwrap_or(shape),
            merge_step: patch
                .merge_step
                .unwrap_or_else(|| default_merge_step(schedule.n_steps)),
            schedule,
            sampler: patch.sampler.unwrap_or_default(),
            trace_stride: patch.trace_stride.unwrap_or(1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Idle,
    Running,
    Done,
    Failed,
}

/// Mask parameters as stored; the raster lives next to the session file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub id: String,
    pub n: usize,
    pub alpha: f64,
    pub seed: u64,
    pub enabled: bool,
    pub z: i32,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub prompt: String,
    pub base_seed: u64,
    pub config: SessionConfig,
    pub masks: Vec<MaskRecord>,
    pub status: Status,
    pub latest_run: Option<String>,
    pub runs: Vec<String>,
    pub created_ms: u64,
    pub updated_ms: u64,
}

impl Session {
    pub fn mask(&self, id: &str) -> Option<&MaskRecord> {
        self.masks.iter().find(|m| m.id == id)
    }

    pub fn touch(&mut self) {
        self.updated_ms = now_ms();
    }

    /// The job this session describes, with the given rasters in stack order.
    pub fn job(&self, rasters: Vec<MaskRaster>) -> BrushJob {
        let mut job = BrushJob::new(
            self.prompt.clone(),
            self.base_seed,
            self.config.latent_shape,
            self.config.schedule,
        )
        .with_merge_step(self.config.merge_step)
        .with_sampler(self.config.sampler)
        .with_trace_stride(self.config.trace_stride);
        for (rec, raster) in self.masks.iter().zip(rasters) {
            let mut mask =
                EditMask::new(rec.id.clone(), raster, rec.n, rec.alpha).with_z_order(rec.z);
            mask.params.branch_seed = SeedSpec::fixed(rec.seed).expect("stored seeds are resolved");
            mask.params.enabled = rec.enabled;
            job = job.with_mask(mask);
        }
        job
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Ids used in URLs and file names.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}
