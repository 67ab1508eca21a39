use std::collections::HashMap;
use std::io;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use brush_core::denoise::Backend;
use brush_core::{BrushJob, SeededRng};
use tokio::sync::Mutex;

use crate::error::{ApiError, ApiResult};
use crate::runs::{execute, Failure, Mode, RunHandle, RunRecord, RunStatus};
use crate::session::{Session, Status};
use crate::store::Store;

pub struct Config {
    pub data_dir: PathBuf,
    pub backend: Backend,
    pub max_sessions: usize,
}

pub type SessionSlot = Arc<Mutex<Session>>;

pub struct AppState {
    pub store: Store,
    pub backend: Backend,
    pub max_sessions: usize,
    sessions: tokio::sync::RwLock<HashMap<String, SessionSlot>>,
    runs: RwLock<HashMap<String, Arc<RunHandle>>>,
}

pub type SharedState = Arc<AppState>;

/// 64-bit random id in hex.
pub fn fresh_id() -> String {
    format!("{:016x}", SeededRng::from_entropy().next_u64())
}

impl AppState {
    /// Opens the data directory and loads every persisted session. Runs
    /// that were in flight when the process stopped are marked failed.
    pub fn open(config: Config) -> io::Result<SharedState> {
        let store = Store::open(&config.data_dir)?;
        let mut sessions = HashMap::new();
        let mut runs = HashMap::new();
        for mut session in store.load_sessions()? {
            for rid in &session.runs {
                let mut record = match store.load_run(&session.id, rid) {
                    Ok(r) => r,
                    Err(e) => {
                        tracing::warn!(session = %session.id, run = %rid, error = %e, "skipping run");
                        continue;
                    }
                };
                if record.status == RunStatus::Running {
                    record.status = RunStatus::Failed;
                    record.error = Some("interrupted by a service restart".into());
                    record.retryable = Some(true);
                    store.save_run(&record)?;
                }
                runs.insert(rid.clone(), RunHandle::new(record));
            }
            if session.status == Status::Running {
                session.status = Status::Failed;
                store.save_session(&session)?;
            }
            sessions.insert(session.id.clone(), Arc::new(Mutex::new(session)));
        }
        tracing::info!(sessions = sessions.len(), runs = runs.len(), "store loaded");
        Ok(Arc::new(AppState {
            store,
            backend: config.backend,
            max_sessions: config.max_sessions,
            sessions: tokio::sync::RwLock::new(sessions),
            runs: RwLock::new(runs),
        }))
    }

    pub async fn session(&self, sid: &str) -> ApiResult<SessionSlot> {
        self.sessions
            .read()
            .await
            .get(sid)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session"))
    }

    pub async fn all_sessions(&self) -> Vec<SessionSlot> {
        self.sessions.read().await.values().cloned().collect()
    }

    /// Persists and registers a new session, enforcing the session cap.
    pub async fn insert_session(&self, session: Session) -> ApiResult<()> {
        let mut map = self.sessions.write().await;
        if map.len() >= self.max_sessions {
            return Err(ApiError::storage(format!(
                "session cap of {} reached",
                self.max_sessions
            )));
        }
        self.store
            .save_session(&session)
            .map_err(ApiError::storage)?;
        map.insert(session.id.clone(), Arc::new(Mutex::new(session)));
        Ok(())
    }

    pub async fn remove_session(&self, sid: &str) -> ApiResult<()> {
        let mut map = self.sessions.write().await;
        let slot = map
            .get(sid)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session"))?;
        let session = slot.lock().await;
        if session.status == Status::Running {
            return Err(ApiError::conflict("session has a running job"));
        }
        self.store.delete_session(sid).map_err(ApiError::storage)?;
        let mut runs = self.runs.write().unwrap_or_else(|p| p.into_inner());
        for rid in &session.runs {
            runs.remove(rid);
        }
        drop(session);
        map.remove(sid);
        Ok(())
    }

    pub fn run(&self, sid: &str, rid: &str) -> ApiResult<Arc<RunHandle>> {
        self.runs
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(rid)
            .filter(|h| h.session_id == sid)
            .cloned()
            .ok_or_else(|| ApiError::not_found("run"))
    }

    /// Starts `job` in the background. The caller holds the session guard and
    /// has checked that nothing is running.
    pub fn start_run(
        self: &Arc<Self>,
        session: &mut Session,
        mode: Mode,
        job: BrushJob,
        replay_of: Option<String>,
    ) -> ApiResult<String> {
        let rid = fresh_id();
        let sid = session.id.clone();
        self.store
            .create_run_dir(&sid, &rid)
            .map_err(ApiError::storage)?;
        self.store
            .write_run_file(&sid, &rid, "job.json", job.to_json_pretty().as_bytes())
            .map_err(ApiError::storage)?;
        let mut record = RunRecord::new(&sid, &rid, mode, &job);
        record.replay_of = replay_of;
        self.store.save_run(&record).map_err(ApiError::storage)?;

        session.status = Status::Running;
        session.latest_run = Some(rid.clone());
        session.runs.push(rid.clone());
        session.touch();
        if let Err(e) = self.store.save_session(session) {
            session.status = Status::Idle;
            session.runs.pop();
            return Err(ApiError::storage(e));
        }

        let handle = RunHandle::new(record);
        self.runs
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(rid.clone(), handle.clone());
        tracing::info!(session = %sid, run = %rid, ?mode, "run started");

        let state = self.clone();
        tokio::spawn(async move {
            let worker = state.clone();
            let h = handle.clone();
            let result = tokio::task::spawn_blocking(move || {
                let denoiser = worker.backend.denoiser();
                execute(&worker.store, &h, mode, &job, denoiser.as_ref())
            })
            .await
            .unwrap_or_else(|e| {
                Err(Failure {
                    message: format!("run aborted: {e}"),
                    retryable: false,
                })
            });
            let record = handle.finished_record(result);
            if let Some(e) = &record.error {
                tracing::warn!(run = %record.run_id, error = %e, "run failed");
            }
            if let Err(e) = state.store.save_run(&record) {
                tracing::error!(run = %record.run_id, error = %e, "cannot persist run record");
            }
            // The session leaves `running` before the run is published as
            // finished, so a client reacting to completion can start the next run.
            if let Ok(slot) = state.session(&record.session_id).await {
                let mut s = slot.lock().await;
                s.status = match record.status {
                    RunStatus::Done => Status::Done,
                    _ => Status::Failed,
                };
                s.touch();
                if let Err(e) = state.store.save_session(&s) {
                    tracing::error!(session = %s.id, error = %e, "cannot persist session");
                }
            }
            handle.publish(record);
        });
        Ok(rid)
    }
}
