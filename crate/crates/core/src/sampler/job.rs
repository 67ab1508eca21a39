use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::SamplerParams;
use crate::masks::{resample_to_latent, resolve_seed, EditMask, MaskRaster};
use crate::numerics::SeededRng;
use crate::{Error, KarrasParams, Result, Shape};

pub const SCHEMA_VERSION: u32 = 1;

/// Merge step used when a job leaves it unset: `N − 10`, or `N/2` for
/// schedules of 20 steps or fewer.
pub fn default_merge_step(n_steps: usize) -> usize {
    n_steps - 10usize.min(n_steps / 2)
}

fn one() -> usize {
    1
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Everything needed to reproduce one generation or edit bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrushJob {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub prompt: String,
    pub base_seed: u64,
    pub latent_shape: Shape,
    pub schedule: KarrasParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_step: Option<usize>,
    #[serde(default)]
    pub sampler: SamplerParams,
    #[serde(default)]
    pub masks: Vec<EditMask>,
    /// Record every `trace_stride`-th step.
    #[serde(default = "one")]
    pub trace_stride: usize,
}

/// An enabled mask ready for the sampler: resolved seed, latent-resolution raster.
#[derive(Clone, Debug)]
pub struct ActiveMask {
    pub id: String,
    pub raster: MaskRaster,
    pub inject_step: usize,
    pub strength: f64,
    pub seed: u64,
}

impl BrushJob {
    pub fn new(
        prompt: impl Into<String>,
        base_seed: u64,
        latent_shape: Shape,
        schedule: KarrasParams,
    ) -> Self {
        BrushJob {
            schema_version: SCHEMA_VERSION,
            prompt: prompt.into(),
            base_seed,
            latent_shape,
            schedule,
            merge_step: None,
            sampler: SamplerParams::default(),
            masks: Vec::new(),
            trace_stride: 1,
        }
    }

    pub fn with_sampler(mut self, sampler: SamplerParams) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_merge_step(mut self, t: usize) -> Self {
        self.merge_step = Some(t);
        self
    }

    pub fn with_mask(mut self, mask: EditMask) -> Self {
        self.masks.push(mask);
        self
    }

    pub fn with_trace_stride(mut self, stride: usize) -> Self {
        self.trace_stride = stride;
        self
    }

    pub fn n_steps(&self) -> usize {
        self.schedule.n_steps
    }

    /// Merge step t, the default when unset.
    pub fn merge_step(&self) -> usize {
        self.merge_step
            .unwrap_or_else(|| default_merge_step(self.schedule.n_steps))
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let job: BrushJob = serde_json::from_slice(bytes)?;
        job.validate()?;
        Ok(job)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("job serializes")
    }

    /// Checks every field constraint; errors name the offending field path.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::param(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        self.schedule
            .validate()
            .map_err(|e| prefix("schedule", e))?;
        self.sampler.validate()?;
        if self.trace_stride == 0 {
            return Err(Error::param("trace_stride", "must be >= 1"));
        }
        let n = self.schedule.n_steps;
        let t = self.merge_step();
        if t == 0 || t > n {
            return Err(Error::param(
                "merge_step",
                format!("must satisfy 1 <= t <= N = {n}, got {t}"),
            ));
        }
        let mut ids = HashSet::new();
        for (i, m) in self.masks.iter().enumerate() {
            m.params
                .validate()
                .map_err(|e| prefix(&format!("masks[{i}]"), e))?;
            if !ids.insert(m.id()) {
                return Err(Error::param(
                    format!("masks[{i}].id"),
                    format!("duplicate id `{}`", m.id()),
                ));
            }
            if m.enabled() && m.params.inject_step >= t {
                return Err(Error::param(
                    format!("masks[{i}].inject_step"),
                    format!(
                        "must be below the merge step {t}, got {}",
                        m.params.inject_step
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Draws a seed for every enabled mask still set to `-1`, writing it into
    /// the job. Returns the seeds of all enabled masks.
    pub fn resolve_seeds(&mut self, rng: &mut SeededRng) -> BTreeMap<String, u64> {
        self.masks
            .iter_mut()
            .filter(|m| m.enabled())
            .map(|m| {
                let seed = resolve_seed(m, rng);
                (m.id().to_string(), seed)
            })
            .collect()
    }

    /// Enabled masks in ascending z-order (ties keep stack order), rasters
    /// resampled to latent resolution. Fails on unresolved seeds.
    pub fn active_masks(&self) -> Result<Vec<ActiveMask>> {
        let (h, w) = (self.latent_shape.height(), self.latent_shape.width());
        let mut active: Vec<(i32, ActiveMask)> = Vec::new();
        for (i, m) in self.masks.iter().enumerate().filter(|(_, m)| m.enabled()) {
            let seed = m.params.branch_seed.get().ok_or_else(|| {
                Error::param(
                    format!("masks[{i}].branch_seed"),
                    "unresolved; call resolve_seeds first",
                )
            })?;
            active.push((
                m.params.z_order,
                ActiveMask {
                    id: m.id().to_string(),
                    raster: resample_to_latent(&m.raster, h, w)?,
                    inject_step: m.params.inject_step,
                    strength: m.params.strength,
                    seed,
                },
            ));
        }
        active.sort_by_key(|(z, _)| *z);
        Ok(active.into_iter().map(|(_, m)| m).collect())
    }

    /// Same job with no masks.
    pub fn without_masks(&self) -> Self {
        BrushJob {
            masks: Vec::new(),
            ..self.clone()
        }
    }
}

fn prefix(path: &str, e: Error) -> Error {
    match e {
        Error::Parameter { field, reason } => Error::param(format!("{path}.{field}"), reason),
        e => e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::SeedSpec;

    fn job() -> BrushJob {
        BrushJob::new(
            "p",
            1,
            Shape::new(1, 4, 4).unwrap(),
            KarrasParams::analytic(),
        )
    }

    fn mask(id: &str, n: usize) -> EditMask {
        EditMask::new(id, MaskRaster::filled(8, 8, 1.0).unwrap(), n, 1.0)
    }

    #[test]
    fn default_merge_step_values() {
        assert_eq!(default_merge_step(50), 40);
        assert_eq!(default_merge_step(100), 90);
        assert_eq!(default_merge_step(10), 5);
        assert_eq!(default_merge_step(2), 1);
        assert_eq!(job().merge_step(), 40);
        assert_eq!(job().with_merge_step(30).merge_step(), 30);
    }

    #[test]
    fn inject_step_must_precede_merge() {
        let err = job().with_mask(mask("a", 45)).validate().unwrap_err();
        assert_eq!(err.field(), Some("masks[0].inject_step"));
        assert!(job().with_mask(mask("a", 39)).validate().is_ok());
        // Disabled masks are not constrained.
        assert!(job().with_mask(mask("a", 45).disabled()).validate().is_ok());
    }

    #[test]
    fn merge_step_bounds() {
        assert_eq!(
            job().with_merge_step(51).validate().unwrap_err().field(),
            Some("merge_step")
        );
        assert_eq!(
            job().with_merge_step(0).validate().unwrap_err().field(),
            Some("merge_step")
        );
        assert!(job().with_merge_step(50).validate().is_ok());
    }

    #[test]
    fn nested_field_paths() {
        let mut j = job();
        j.schedule.rho = 0.0;
        assert_eq!(j.validate().unwrap_err().field(), Some("schedule.rho"));
        let mut m = mask("a", 1);
        m.params.strength = f64::NAN;
        assert_eq!(
            job().with_mask(m).validate().unwrap_err().field(),
            Some("masks[0].strength")
        );
        let dup = job().with_mask(mask("a", 1)).with_mask(mask("a", 2));
        assert_eq!(dup.validate().unwrap_err().field(), Some("masks[1].id"));
    }

    #[test]
    fn seeds_resolve_only_for_enabled_masks() {
        let mut j = job()
            .with_mask(mask("a", 1))
            .with_mask(mask("b", 1).disabled())
            .with_mask(mask("c", 1).with_seed(7));
        assert!(j.active_masks().is_err());
        let seeds = j.resolve_seeds(&mut SeededRng::new(3, 0));
        assert_eq!(seeds.len(), 2);
        assert_eq!(seeds["c"], 7);
        assert_eq!(j.masks[1].params.branch_seed, SeedSpec::RANDOM);
        let active = j.active_masks().unwrap();
        assert_eq!(active.len(), 2);
        assert_eq!(
            (active[0].raster.height(), active[0].raster.width()),
            (4, 4)
        );
    }

    #[test]
    fn active_masks_sorted_by_z() {
        let mut j = job()
            .with_mask(mask("top", 1).with_seed(1).with_z_order(5))
            .with_mask(mask("bottom", 1).with_seed(2).with_z_order(-1))
            .with_mask(mask("mid", 1).with_seed(3));
        j.resolve_seeds(&mut SeededRng::new(0, 0));
        let ids: Vec<_> = j
            .active_masks()
            .unwrap()
            .into_iter()
            .map(|m| m.id)
            .collect();
        assert_eq!(ids, ["bottom", "mid", "top"]);
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let j = job()
            .with_mask(mask("a", 3).with_seed(11))
            .with_merge_step(35);
        let back = BrushJob::from_json(j.to_json_pretty().as_bytes()).unwrap();
        assert_eq!(back, j);
        let mut v: serde_json::Value = serde_json::to_value(&j).unwrap();
        v["schema_version"] = 2.into();
        let err = BrushJob::from_json(v.to_string().as_bytes()).unwrap_err();
        assert_eq!(err.field(), Some("schema_version"));
    }
}
