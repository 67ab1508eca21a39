use std::collections::HashMap;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use brush_core::masks::{load_mask_png, resample_to_latent, save_mask_png};
use brush_core::{BrushJob, SeededRng, Shape};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{ApiError, ApiResult};
use crate::runs::{Mode, RunRecord};
use crate::session::{now_ms, valid_id, ConfigPatch, MaskRecord, Session, SessionConfig, Status};
use crate::sse::preview;
use crate::state::{fresh_id, SharedState};

/// Latent shape for remote backends when the session does not give one.
const REMOTE_DEFAULT_SHAPE: (usize, usize, usize) = (4, 64, 64);

pub fn router(state: SharedState) -> Router {
    let v1 = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{sid}", get(get_session).delete(delete_session))
        .route(
            "/sessions/{sid}/masks/{mid}",
            put(put_mask).get(get_mask).delete(delete_mask),
        )
        .route("/sessions/{sid}/masks/{mid}/footprint", get(mask_footprint))
        .route("/sessions/{sid}/run", post(start_run))
        .route("/sessions/{sid}/runs/{rid}", get(get_run))
        .route("/sessions/{sid}/runs/{rid}/preview", get(preview))
        .route("/sessions/{sid}/runs/{rid}/frames/{index}", get(get_frame))
        .route("/sessions/{sid}/runs/{rid}/image", get(get_image))
        .route("/sessions/{sid}/runs/{rid}/latent", get(get_latent))
        .route("/sessions/{sid}/runs/{rid}/job", get(get_job))
        .route("/sessions/{sid}/runs/{rid}/replay", post(replay_run));
    Router::new().nest("/v1", v1).with_state(state)
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

pub fn run_url(sid: &str, rid: &str) -> String {
    format!("/v1/sessions/{sid}/runs/{rid}")
}

fn session_json(s: &Session) -> Value {
    let mut v = serde_json::to_value(s).expect("session serializes");
    v["session_id"] = json!(s.id);
    v
}

pub fn run_json(r: &RunRecord) -> Value {
    let mut v = serde_json::to_value(r).expect("run serializes");
    let base = run_url(&r.session_id, &r.run_id);
    v["preview_url"] = json!(format!("{base}/preview"));
    v["image_url"] = json!(format!("{base}/image"));
    v["latent_url"] = json!(format!("{base}/latent"));
    v
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        let path = serde_path(&e);
        match path {
            Some(p) => ApiError::field(
                StatusCode::BAD_REQUEST,
                p,
                format!("malformed request: {e}"),
            ),
            None => ApiError::new(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
        }
    })
}

/// Best-effort field name from a serde error message (`unknown field `x``,
/// `missing field `x``).
fn serde_path(e: &serde_json::Error) -> Option<String> {
    let msg = e.to_string();
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

async fn health(State(state): State<SharedState>) -> Json<Value> {
    Json(json!({ "status": "ok", "backend": format!("{:?}", state.backend) }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    prompt: String,
    #[serde(default)]
    base_seed: Option<i64>,
    #[serde(default)]
    config: Option<ConfigPatch>,
}

async fn create_session(
    State(state): State<SharedState>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CreateSession = parse_json(&body)?;
    let base_seed = match req.base_seed {
        None | Some(-1) => SeededRng::from_entropy().next_seed(),
        Some(s) if s >= 0 => s as u64,
        Some(s) => {
            return Err(ApiError::field(
                StatusCode::BAD_REQUEST,
                "base_seed",
                format!("must be >= 0 or -1, got {s}"),
            ))
        }
    };
    let patch = req.config.unwrap_or_default();
    let shape = match (state.backend.shape(), patch.latent_shape) {
        (Some(b), Some(s)) if b != s => {
            return Err(ApiError::field(
                StatusCode::BAD_REQUEST,
                "config.latent_shape",
                format!("backend works on {b}, got {s}"),
            ))
        }
        (Some(b), _) => b,
        (None, Some(s)) => s,
        (None, None) => {
            let (c, h, w) = REMOTE_DEFAULT_SHAPE;
            Shape::new(c, h, w).expect("default shape is valid")
        }
    };
    let config = SessionConfig::resolve(patch, shape, state.backend.default_schedule());
    let now = now_ms();
    let session = Session {
        id: fresh_id(),
        prompt: req.prompt,
        base_seed,
        config,
        masks: Vec::new(),
        status: Status::Idle,
        latest_run: None,
        runs: Vec::new(),
        created_ms: now,
        updated_ms: now,
    };
    session
        .job(Vec::new())
        .validate()
        .map_err(|e| ApiError::from_core(StatusCode::BAD_REQUEST, "config", e))?;
    let body = session_json(&session);
    state.insert_session(session).await?;
    Ok((StatusCode::CREATED, Json(body)))
}

async fn list_sessions(State(state): State<SharedState>) -> Json<Value> {
    let mut out = Vec::new();
    for slot in state.all_sessions().await {
        out.push(slot.lock().await.clone());
    }
    out.sort_by(|a, b| (a.created_ms, &a.id).cmp(&(b.created_ms, &b.id)));
    Json(json!({ "sessions": out.iter().map(session_json).collect::<Vec<_>>() }))
}

async fn get_session(
    State(state): State<SharedState>,
    Path(sid): Path<String>,
) -> ApiResult<Json<Value>> {
    let slot = state.session(&sid).await?;
    let s = slot.lock().await;
    Ok(Json(session_json(&s)))
}

async fn delete_session(
    State(state): State<SharedState>,
    Path(sid): Path<String>,
) -> ApiResult<StatusCode> {
    state.remove_session(&sid).await?;
    Ok(StatusCode::NO_CONTENT)
}

fn query_param<T: std::str::FromStr>(
    q: &HashMap<String, String>,
    name: &str,
) -> ApiResult<Option<T>> {
    match q.get(name) {
        None => Ok(None),
        Some(raw) => raw.trim().parse().map(Some).map_err(|_| {
            ApiError::field(
                StatusCode::BAD_REQUEST,
                name,
                format!("cannot parse `{raw}`"),
            )
        }),
    }
}

fn required<T>(v: Option<T>, name: &str) -> ApiResult<T> {
    v.ok_or_else(|| ApiError::field(StatusCode::BAD_REQUEST, name, "missing query parameter"))
}

fn unprocessable(field: &str, message: impl Into<String>) -> ApiError {
    ApiError::field(StatusCode::UNPROCESSABLE_ENTITY, field, message)
}

async fn put_mask(
    State(state): State<SharedState>,
    Path((sid, mid)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
    body: Bytes,
) -> ApiResult<Json<MaskRecord>> {
    if !valid_id(&mid) {
        return Err(ApiError::field(
            StatusCode::BAD_REQUEST,
            "mask_id",
            "use 1 to 64 of [A-Za-z0-9_-]",
        ));
    }
    let n: usize = required(query_param(&q, "n")?, "n")?;
    let alpha: f64 = required(query_param(&q, "alpha")?, "alpha")?;
    let seed: i64 = query_param(&q, "seed")?.unwrap_or(-1);
    let enabled: bool = query_param(&q, "enabled")?.unwrap_or(true);
    let z: i32 = query_param(&q, "z")?.unwrap_or(0);

    let slot = state.session(&sid).await?;
    let mut session = slot.lock().await;
    if session.status == Status::Running {
        return Err(ApiError::conflict("session has a running job"));
    }
    let t = session.config.merge_step;
    if n >= t {
        return Err(unprocessable(
            "n",
            format!("must be below the merge step {t}, got {n}"),
        ));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(unprocessable(
            "alpha",
            format!("must be finite and >= 0, got {alpha}"),
        ));
    }
    if seed < -1 {
        return Err(unprocessable(
            "seed",
            format!("must be >= 0 or -1, got {seed}"),
        ));
    }
    let raster = if body.is_empty() {
        None
    } else {
        Some(load_mask_png(&body).map_err(|e| unprocessable("body", e.to_string()))?)
    };
    let (height, width) = match (&raster, session.mask(&mid)) {
        (Some(r), _) => (r.height(), r.width()),
        (None, Some(existing)) => (existing.height, existing.width),
        (None, None) => {
            return Err(ApiError::field(
                StatusCode::BAD_REQUEST,
                "body",
                "a PNG body is required for a new mask",
            ))
        }
    };
    let record = MaskRecord {
        id: mid.clone(),
        n,
        alpha,
        seed: if seed == -1 {
            SeededRng::from_entropy().next_seed()
        } else {
            seed as u64
        },
        enabled,
        z,
        height,
        width,
    };
    if let Some(r) = &raster {
        state
            .store
            .save_mask(&sid, &mid, r)
            .map_err(ApiError::storage)?;
    }
    match session.masks.iter_mut().find(|m| m.id == mid) {
        Some(slot) => *slot = record.clone(),
        None => session.masks.push(record.clone()),
    }
    session.touch();
    state
        .store
        .save_session(&session)
        .map_err(ApiError::storage)?;
    Ok(Json(record))
}

async fn get_mask(
    State(state): State<SharedState>,
    Path((sid, mid)): Path<(String, String)>,
) -> ApiResult<Response> {
    let slot = state.session(&sid).await?;
    let session = slot.lock().await;
    session
        .mask(&mid)
        .ok_or_else(|| ApiError::not_found("mask"))?;
    let bytes = state
        .store
        .mask_png(&sid, &mid)
        .map_err(ApiError::storage)?;
    Ok(png(bytes))
}

/// The mask as the sampler sees it: resampled to latent resolution.
async fn mask_footprint(
    State(state): State<SharedState>,
    Path((sid, mid)): Path<(String, String)>,
) -> ApiResult<Response> {
    let slot = state.session(&sid).await?;
    let session = slot.lock().await;
    session
        .mask(&mid)
        .ok_or_else(|| ApiError::not_found("mask"))?;
    let raster = state
        .store
        .load_mask(&sid, &mid)
        .map_err(ApiError::storage)?;
    let shape = session.config.latent_shape;
    let footprint = resample_to_latent(&raster, shape.height(), shape.width())
        .and_then(|r| save_mask_png(&r))
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(png(footprint))
}

async fn delete_mask(
    State(state): State<SharedState>,
    Path((sid, mid)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    let slot = state.session(&sid).await?;
    let mut session = slot.lock().await;
    if session.status == Status::Running {
        return Err(ApiError::conflict("session has a running job"));
    }
    let before = session.masks.len();
    session.masks.retain(|m| m.id != mid);
    if session.masks.len() == before {
        return Err(ApiError::not_found("mask"));
    }
    session.touch();
    state
        .store
        .save_session(&session)
        .map_err(ApiError::storage)?;
    if let Err(e) = state.store.delete_mask(&sid, &mid) {
        tracing::warn!(session = %sid, mask = %mid, error = %e, "mask file not removed");
    }
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    mode: Mode,
}

async fn start_run(
    State(state): State<SharedState>,
    Path(sid): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: RunRequest = parse_json(&body)?;
    let slot = state.session(&sid).await?;
    let mut session = slot.lock().await;
    if session.status == Status::Running {
        return Err(ApiError::conflict("session already has a running job"));
    }
    let rasters = session
        .masks
        .iter()
        .map(|m| state.store.load_mask(&sid, &m.id))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(ApiError::storage)?;
    let mut job = session.job(rasters);
    if req.mode == Mode::Generate {
        job = job.without_masks();
    }
    job.validate()
        .map_err(|e| ApiError::from_core(StatusCode::UNPROCESSABLE_ENTITY, "", e))?;
    let rid = state.start_run(&mut session, req.mode, job, None)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "run_id": rid, "url": run_url(&sid, &rid) })),
    ))
}

async fn get_run(
    State(state): State<SharedState>,
    Path((sid, rid)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    Ok(Json(run_json(&state.run(&sid, &rid)?.snapshot())))
}

async fn get_frame(
    State(state): State<SharedState>,
    Path((sid, rid, index)): Path<(String, String, usize)>,
) -> ApiResult<Response> {
    let handle = state.run(&sid, &rid)?;
    handle
        .poll(index)
        .0
        .ok_or_else(|| ApiError::not_found("frame"))?;
    let bytes = tokio::fs::read(state.store.frame_path(&sid, &rid, index))
        .await
        .map_err(ApiError::storage)?;
    Ok(png(bytes))
}

async fn finished_file(
    state: &SharedState,
    sid: &str,
    rid: &str,
    name: &str,
) -> ApiResult<Vec<u8>> {
    let handle = state.run(sid, rid)?;
    let rec = handle.snapshot();
    if rec.status != crate::runs::RunStatus::Done {
        return Err(ApiError::conflict(
            format!("run is {:?}", rec.status).to_lowercase(),
        ));
    }
    state
        .store
        .read_run_file(sid, rid, name)
        .map_err(ApiError::storage)
}

async fn get_image(
    State(state): State<SharedState>,
    Path((sid, rid)): Path<(String, String)>,
) -> ApiResult<Response> {
    Ok(png(finished_file(&state, &sid, &rid, "final.png").await?))
}

async fn get_latent(
    State(state): State<SharedState>,
    Path((sid, rid)): Path<(String, String)>,
) -> ApiResult<Response> {
    let bytes = finished_file(&state, &sid, &rid, "final.lat").await?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

async fn get_job(
    State(state): State<SharedState>,
    Path((sid, rid)): Path<(String, String)>,
) -> ApiResult<Response> {
    state.run(&sid, &rid)?;
    let bytes = state
        .store
        .read_run_file(&sid, &rid, "job.json")
        .map_err(ApiError::storage)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

/// Re-executes the stored job of a run as a new run of the same session.
async fn replay_run(
    State(state): State<SharedState>,
    Path((sid, rid)): Path<(String, String)>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let source = state.run(&sid, &rid)?.snapshot();
    let bytes = state
        .store
        .read_run_file(&sid, &rid, "job.json")
        .map_err(ApiError::storage)?;
    let job = BrushJob::from_json(&bytes)
        .map_err(|e| ApiError::storage(format!("stored job unreadable: {e}")))?;
    let slot = state.session(&sid).await?;
    let mut session = slot.lock().await;
    if session.status == Status::Running {
        return Err(ApiError::conflict("session already has a running job"));
    }
    let new_rid = state.start_run(&mut session, source.mode, job, Some(rid))?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "run_id": new_rid, "url": run_url(&sid, &new_rid) })),
    ))
}
