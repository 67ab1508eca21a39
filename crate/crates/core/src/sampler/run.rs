use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use super::{euler_churn_step, ActiveMask, BrushJob};
use crate::denoise::Denoiser;
use crate::numerics::{axpy_masked, gaussian_latent, lerp_masked, SeededRng};
use crate::{Error, Grid, Result, Scalar, SigmaSchedule};

/// Stream of a seed used for the initial latent and for injected noise.
pub const INIT_STREAM: u64 = 0;

/// Stream of a seed used for churn noise at step `i`. One stream per step
/// keeps each trajectory's draws independent of what other masks do.
pub fn churn_stream(step: usize) -> u64 {
    1 + step as u64
}

/// Which trajectory a snapshot belongs to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StreamId {
    Base,
    Branch(String),
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamId::Base => f.write_str("base"),
            StreamId::Branch(id) => write!(f, "branch:{id}"),
        }
    }
}

impl std::str::FromStr for StreamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(StreamId::Base),
            _ => s
                .strip_prefix("branch:")
                .filter(|id| !id.is_empty())
                .map(|id| StreamId::Branch(id.to_string()))
                .ok_or_else(|| Error::param("stream", format!("unknown stream `{s}`"))),
        }
    }
}

/// Receives snapshots as the run produces them.
///
/// Base snapshots are taken at the start of each step (after the merge at
/// step t) and once more for the final latent at step N. Branch snapshots
/// cover steps `n_k..=t`, the one at `n_k` being the freshly injected latent
/// and the one at `t` the latent that gets merged.
pub trait FrameSink<T> {
    fn frame(&mut self, step: usize, stream: &StreamId, latent: &Grid<T>);
}

impl<T> FrameSink<T> for () {
    fn frame(&mut self, _: usize, _: &StreamId, _: &Grid<T>) {}
}

#[derive(Clone, Debug)]
pub struct Snapshot<T> {
    pub step: usize,
    pub latent: Grid<T>,
}

/// Recorded snapshots of one run plus what is needed to replay it.
#[derive(Clone, Debug)]
pub struct RunTrace<T> {
    pub stride: usize,
    pub base: Vec<Snapshot<T>>,
    pub branches: BTreeMap<String, Vec<Snapshot<T>>>,
    pub base_seed: u64,
    pub resolved_seeds: BTreeMap<String, u64>,
    pub wall_ms: f64,
}

impl<T: Scalar> RunTrace<T> {
    fn new(stride: usize, base_seed: u64) -> Self {
        RunTrace {
            stride,
            base: Vec::new(),
            branches: BTreeMap::new(),
            base_seed,
            resolved_seeds: BTreeMap::new(),
            wall_ms: 0.0,
        }
    }

    pub fn base_at(&self, step: usize) -> Option<&Grid<T>> {
        self.base.iter().find(|s| s.step == step).map(|s| &s.latent)
    }

    pub fn branch_at(&self, mask_id: &str, step: usize) -> Option<&Grid<T>> {
        self.branches
            .get(mask_id)?
            .iter()
            .find(|s| s.step == step)
            .map(|s| &s.latent)
    }
}

impl<T: Scalar> FrameSink<T> for RunTrace<T> {
    fn frame(&mut self, step: usize, stream: &StreamId, latent: &Grid<T>) {
        let snap = Snapshot {
            step,
            latent: latent.clone(),
        };
        match stream {
            StreamId::Base => self.base.push(snap),
            StreamId::Branch(id) => self.branches.entry(id.clone()).or_default().push(snap),
        }
    }
}

/// Final latent and replay data of a run whose frames went to a caller sink.
#[derive(Clone, Debug)]
pub struct RunOutcome<T> {
    pub latent: Grid<T>,
    pub resolved_seeds: BTreeMap<String, u64>,
    pub wall_ms: f64,
}

struct Strided<'a, T> {
    stride: usize,
    final_step: usize,
    sink: &'a mut dyn FrameSink<T>,
}

impl<T> Strided<'_, T> {
    fn emit(&mut self, step: usize, stream: &StreamId, latent: &Grid<T>) {
        let is_final_base = step == self.final_step && *stream == StreamId::Base;
        if step.is_multiple_of(self.stride) || is_final_base {
            self.sink.frame(step, stream, latent);
        }
    }
}

fn execute<T, D>(
    job: &BrushJob,
    masks: &[ActiveMask],
    denoiser: &D,
    sink: &mut dyn FrameSink<T>,
) -> Result<RunOutcome<T>>
where
    T: Scalar,
    D: Denoiser<T> + ?Sized,
{
    let started = Instant::now();
    let sched = SigmaSchedule::<T>::karras(&job.schedule)?;
    let n = sched.n_steps();
    let t = job.merge_step();
    let shape = job.latent_shape;
    let prompt = job.prompt.as_str();
    let mut out = Strided {
        stride: job.trace_stride,
        final_step: n,
        sink,
    };
    let branch_ids: Vec<StreamId> = masks
        .iter()
        .map(|m| StreamId::Branch(m.id.clone()))
        .collect();

    let advance = |x: &Grid<T>, i: usize, seed: u64, stream: &StreamId| {
        let mut rng = SeededRng::new(seed, churn_stream(i));
        euler_churn_step(x, i, &sched, &job.sampler, denoiser, prompt, &mut rng)
            .map_err(|e| e.in_run(i, &stream.to_string()))
    };

    let mut x: Grid<T> = gaussian_latent(
        &mut SeededRng::new(job.base_seed, INIT_STREAM),
        shape,
        sched.sigma_max().as_f64(),
    )?;
    let mut branches: Vec<Option<Grid<T>>> = vec![None; masks.len()];

    let merge = |x: &mut Grid<T>,
                 branches: &mut Vec<Option<Grid<T>>>,
                 out: &mut Strided<'_, T>|
     -> Result<()> {
        // `masks` is already in ascending z-order: later masks win on overlap.
        for (k, m) in masks.iter().enumerate() {
            if let Some(b) = branches[k].take() {
                out.emit(t, &branch_ids[k], &b);
                *x = lerp_masked(x, &b, &m.raster)?;
            }
        }
        Ok(())
    };

    for i in 0..n {
        if i == t {
            merge(&mut x, &mut branches, &mut out)?;
        }
        out.emit(i, &StreamId::Base, &x);
        if i < t {
            for (k, m) in masks.iter().enumerate() {
                if i == m.inject_step {
                    let eps: Grid<T> =
                        gaussian_latent(&mut SeededRng::new(m.seed, INIT_STREAM), shape, 1.0)?;
                    let injected = axpy_masked(&x, &eps, T::from_f64_lossy(m.strength), &m.raster)
                        .map_err(|e| e.in_run(i, &branch_ids[k].to_string()))?;
                    branches[k] = Some(injected);
                }
                if let Some(b) = &branches[k] {
                    out.emit(i, &branch_ids[k], b);
                    let next = advance(b, i, m.seed, &branch_ids[k])?;
                    branches[k] = Some(next);
                }
            }
        }
        x = advance(&x, i, job.base_seed, &StreamId::Base)?;
    }
    if t == n {
        merge(&mut x, &mut branches, &mut out)?;
    }
    out.emit(n, &StreamId::Base, &x);

    Ok(RunOutcome {
        latent: x,
        resolved_seeds: masks.iter().map(|m| (m.id.clone(), m.seed)).collect(),
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn traced<T, F>(job: &BrushJob, body: F) -> Result<(Grid<T>, RunTrace<T>)>
where
    T: Scalar,
    F: FnOnce(&mut RunTrace<T>) -> Result<RunOutcome<T>>,
{
    let mut trace = RunTrace::new(job.trace_stride, job.base_seed);
    let outcome = body(&mut trace)?;
    trace.resolved_seeds = outcome.resolved_seeds;
    trace.wall_ms = outcome.wall_ms;
    Ok((outcome.latent, trace))
}

/// Plain generation from the base seed. The job's masks are ignored.
pub fn generate<T, D>(job: &BrushJob, denoiser: &D) -> Result<(Grid<T>, RunTrace<T>)>
where
    T: Scalar,
    D: Denoiser<T> + ?Sized,
{
    traced(job, |trace| generate_observed(job, denoiser, trace))
}

pub fn generate_observed<T, D>(
    job: &BrushJob,
    denoiser: &D,
    sink: &mut dyn FrameSink<T>,
) -> Result<RunOutcome<T>>
where
    T: Scalar,
    D: Denoiser<T> + ?Sized,
{
    job.validate()?;
    execute(job, &[], denoiser, sink)
}

/// The brush procedure over every enabled mask of `job`. All `-1` seeds must
/// have been resolved (see [`BrushJob::resolve_seeds`]); the job is validated
/// before any denoiser call.
pub fn run_brush<T, D>(job: &BrushJob, denoiser: &D) -> Result<(Grid<T>, RunTrace<T>)>
where
    T: Scalar,
    D: Denoiser<T> + ?Sized,
{
    traced(job, |trace| run_brush_observed(job, denoiser, trace))
}

pub fn run_brush_observed<T, D>(
    job: &BrushJob,
    denoiser: &D,
    sink: &mut dyn FrameSink<T>,
) -> Result<RunOutcome<T>>
where
    T: Scalar,
    D: Denoiser<T> + ?Sized,
{
    job.validate()?;
    let masks = job.active_masks()?;
    execute(job, &masks, denoiser, sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::{GaussianMixture, IdentityDenoiser};
    use crate::masks::{EditMask, MaskRaster};
    use crate::{KarrasParams, SamplerParams, Shape};

    fn job(n: usize) -> BrushJob {
        BrushJob::new(
            "p",
            11,
            Shape::new(1, 4, 4).unwrap(),
            KarrasParams::analytic().with_steps(n),
        )
    }

    fn left_half() -> MaskRaster {
        MaskRaster::from_fn(4, 4, |_, c| if c < 2 { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn stream_id_text_form() {
        assert_eq!(StreamId::Base.to_string(), "base");
        assert_eq!(StreamId::Branch("m1".into()).to_string(), "branch:m1");
        assert_eq!(
            "branch:m1".parse::<StreamId>().unwrap(),
            StreamId::Branch("m1".into())
        );
        assert!("branch:".parse::<StreamId>().is_err());
        assert!("other".parse::<StreamId>().is_err());
    }

    #[test]
    fn snapshot_layout() {
        let gmm = GaussianMixture::gaussian(Shape::new(1, 4, 4).unwrap(), 0.0, 0.5).unwrap();
        let j = job(12)
            .with_merge_step(8)
            .with_mask(EditMask::new("m", left_half(), 3, 1.0).with_seed(5));
        let (out, trace) = run_brush::<f32, _>(&j, &gmm).unwrap();
        let base_steps: Vec<_> = trace.base.iter().map(|s| s.step).collect();
        assert_eq!(base_steps, (0..=12).collect::<Vec<_>>());
        let branch_steps: Vec<_> = trace.branches["m"].iter().map(|s| s.step).collect();
        assert_eq!(branch_steps, (3..=8).collect::<Vec<_>>());
        assert!(trace.base_at(12).unwrap().bit_eq(&out));
        assert_eq!(trace.resolved_seeds["m"], 5);
    }

    #[test]
    fn stride_filters_snapshots() {
        let gmm = GaussianMixture::gaussian(Shape::new(1, 4, 4).unwrap(), 0.0, 0.5).unwrap();
        let j = job(12).with_trace_stride(5);
        let (_, trace) = generate::<f32, _>(&j, &gmm).unwrap();
        let steps: Vec<_> = trace.base.iter().map(|s| s.step).collect();
        assert_eq!(steps, [0, 5, 10, 12]);
    }

    #[test]
    fn validation_happens_before_compute() {
        struct Panics;
        impl Denoiser<f32> for Panics {
            fn denoise(&self, _: &Grid<f32>, _: f32, _: &str) -> Result<Grid<f32>> {
                panic!("must not be called")
            }
        }
        let j = job(50).with_mask(EditMask::new("m", left_half(), 40, 1.0).with_seed(1));
        let err = run_brush::<f32, _>(&j, &Panics).unwrap_err();
        assert_eq!(err.field(), Some("masks[0].inject_step"));
        let unresolved = job(50).with_mask(EditMask::new("m", left_half(), 4, 1.0));
        assert_eq!(
            run_brush::<f32, _>(&unresolved, &Panics)
                .unwrap_err()
                .field(),
            Some("masks[0].branch_seed")
        );
    }

    #[test]
    fn backend_errors_carry_context() {
        struct FailsLate;
        impl Denoiser<f32> for FailsLate {
            fn denoise(&self, x: &Grid<f32>, sigma: f32, _: &str) -> Result<Grid<f32>> {
                if sigma < 1.0 {
                    Err(Error::Backend {
                        message: "down".into(),
                        retryable: true,
                    })
                } else {
                    Ok(x.clone())
                }
            }
        }
        let j = job(20).with_sampler(SamplerParams::deterministic());
        let err = generate::<f32, _>(&j, &FailsLate).unwrap_err();
        assert!(err.is_retryable());
        match err {
            Error::InRun { stream, .. } => assert_eq!(stream, "base"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn merge_at_final_step() {
        let j = job(6)
            .with_merge_step(6)
            .with_sampler(SamplerParams::deterministic())
            .with_mask(EditMask::new("m", left_half(), 2, 2.0).with_seed(9));
        let (out, trace) = run_brush::<f64, _>(&j, &IdentityDenoiser).unwrap();
        let branch = trace.branch_at("m", 6).unwrap();
        let unmerged = trace.base.iter().filter(|s| s.step == 6).count();
        assert_eq!(unmerged, 1);
        for r in 0..4 {
            for c in 0..4 {
                let expect = if c < 2 {
                    branch.get(0, r, c)
                } else {
                    trace.base_at(5).unwrap().get(0, r, c)
                };
                assert_eq!(out.get(0, r, c), expect);
            }
        }
    }
}
