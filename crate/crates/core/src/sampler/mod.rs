//! Stochastic Euler sampling and the brush procedure: base trajectory,
//! per-mask branch trajectories, masked noise injection and masked merge.

mod job;
pub mod metrics;
mod params;
mod run;
mod step;

pub use job::{default_merge_step, ActiveMask, BrushJob, SCHEMA_VERSION};
pub use metrics::{edit_magnitude, highpass_residual_rms, EditMagnitude};
pub use params::SamplerParams;
pub use run::{
    churn_stream, generate, generate_observed, run_brush, run_brush_observed, FrameSink,
    RunOutcome, RunTrace, Snapshot, StreamId, INIT_STREAM,
};
pub use step::euler_churn_step;
