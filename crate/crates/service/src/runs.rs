use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use brush_core::numerics::io::encode_latent;
use brush_core::render::{display_scale, render_png};
use brush_core::sampler::{generate_observed, run_brush_observed, FrameSink, StreamId};
use brush_core::{BrushJob, Denoiser, Latent};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use crate::session::now_ms;
use crate::store::Store;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Generate,
    Brush,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub index: usize,
    pub step: usize,
    pub stream: String,
    pub bytes: usize,
}

/// Persisted state of one run (`run.json`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub session_id: String,
    pub mode: Mode,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retryable: Option<bool>,
    pub base_seed: u64,
    pub resolved_seeds: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_of: Option<String>,
    #[serde(default)]
    pub wall_ms: Option<f64>,
    pub started_ms: u64,
    #[serde(default)]
    pub finished_ms: Option<u64>,
    #[serde(default)]
    pub frames: Vec<FrameMeta>,
}

impl RunRecord {
    pub fn new(session_id: &str, run_id: &str, mode: Mode, job: &BrushJob) -> Self {
        RunRecord {
            run_id: run_id.to_string(),
            session_id: session_id.to_string(),
            mode,
            status: RunStatus::Running,
            error: None,
            retryable: None,
            base_seed: job.base_seed,
            resolved_seeds: job
                .masks
                .iter()
                .filter(|m| mode == Mode::Brush && m.enabled())
                .filter_map(|m| m.params.branch_seed.get().map(|s| (m.id().to_string(), s)))
                .collect(),
            replay_of: None,
            wall_ms: None,
            started_ms: now_ms(),
            finished_ms: None,
            frames: Vec::new(),
        }
    }
}

/// Live view of a run. Frames are published as they are written; readers
/// wait on `changed` and never block the sampler.
pub struct RunHandle {
    pub session_id: String,
    pub run_id: String,
    record: Mutex<RunRecord>,
    tick: watch::Sender<usize>,
}

pub struct Failure {
    pub message: String,
    pub retryable: bool,
}

impl RunHandle {
    pub fn new(record: RunRecord) -> Arc<Self> {
        let (tick, _) = watch::channel(record.frames.len());
        Arc::new(RunHandle {
            session_id: record.session_id.clone(),
            run_id: record.run_id.clone(),
            record: Mutex::new(record),
            tick,
        })
    }

    fn lock(&self) -> MutexGuard<'_, RunRecord> {
        self.record.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn snapshot(&self) -> RunRecord {
        self.lock().clone()
    }

    pub fn subscribe(&self) -> watch::Receiver<usize> {
        self.tick.subscribe()
    }

    /// Frame `index` if published, and whether the run has ended.
    pub fn poll(&self, index: usize) -> (Option<FrameMeta>, Option<RunRecord>) {
        let rec = self.lock();
        match rec.frames.get(index) {
            Some(f) => (Some(f.clone()), None),
            None if rec.status != RunStatus::Running => (None, Some(rec.clone())),
            None => (None, None),
        }
    }

    fn push_frame(&self, step: usize, stream: &StreamId, bytes: usize) -> usize {
        let mut rec = self.lock();
        let index = rec.frames.len();
        rec.frames.push(FrameMeta {
            index,
            step,
            stream: stream.to_string(),
            bytes,
        });
        drop(rec);
        self.tick.send_replace(index + 1);
        index
    }

    /// The final record for `result`, not yet visible to readers.
    pub fn finished_record(&self, result: Result<f64, Failure>) -> RunRecord {
        let mut rec = self.snapshot();
        match result {
            Ok(wall_ms) => {
                rec.status = RunStatus::Done;
                rec.wall_ms = Some(wall_ms);
            }
            Err(f) => {
                rec.status = RunStatus::Failed;
                rec.error = Some(f.message);
                rec.retryable = Some(f.retryable);
            }
        }
        rec.finished_ms = Some(now_ms());
        rec
    }

    pub fn publish(&self, record: RunRecord) {
        *self.lock() = record;
        self.tick.send_modify(|_| {});
    }
}

struct FrameWriter<'a> {
    store: &'a Store,
    handle: &'a RunHandle,
    scale: usize,
    error: Option<String>,
}

impl FrameSink<f32> for FrameWriter<'_> {
    fn frame(&mut self, step: usize, stream: &StreamId, latent: &Latent) {
        if self.error.is_some() {
            return;
        }
        let written = render_png(latent, self.scale)
            .map_err(|e| e.to_string())
            .and_then(|png| {
                let index = self.handle.lock().frames.len();
                std::fs::write(
                    self.store
                        .frame_path(&self.handle.session_id, &self.handle.run_id, index),
                    &png,
                )
                .map_err(|e| e.to_string())?;
                Ok(png.len())
            });
        match written {
            Ok(bytes) => {
                self.handle.push_frame(step, stream, bytes);
            }
            Err(e) => self.error = Some(e),
        }
    }
}

/// Runs `job` to completion on the calling thread, publishing frames and
/// writing the final latent and image. Returns wall time in milliseconds.
pub fn execute(
    store: &Store,
    handle: &RunHandle,
    mode: Mode,
    job: &BrushJob,
    denoiser: &dyn Denoiser<f32>,
) -> Result<f64, Failure> {
    let mut sink = FrameWriter {
        store,
        handle,
        scale: display_scale(job.latent_shape),
        error: None,
    };
    let outcome = match mode {
        Mode::Generate => generate_observed(job, denoiser, &mut sink),
        Mode::Brush => run_brush_observed(job, denoiser, &mut sink),
    }
    .map_err(|e| Failure {
        retryable: e.is_retryable(),
        message: e.to_string(),
    })?;
    let storage = |e: String| Failure {
        message: format!("persistence failure: {e}"),
        retryable: false,
    };
    if let Some(e) = sink.error {
        return Err(storage(e));
    }
    let (sid, rid) = (&handle.session_id, &handle.run_id);
    store
        .write_run_file(sid, rid, "final.lat", &encode_latent(&outcome.latent))
        .map_err(|e| storage(e.to_string()))?;
    let png = render_png(&outcome.latent, display_scale(job.latent_shape))
        .map_err(|e| storage(e.to_string()))?;
    store
        .write_run_file(sid, rid, "final.png", &png)
        .map_err(|e| storage(e.to_string()))?;
    Ok(outcome.wall_ms)
}
