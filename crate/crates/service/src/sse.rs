use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::HeaderMap;
use axum::response::sse::{Event, KeepAlive, Sse};
use base64::Engine;
use futures::Stream;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::watch;

use crate::error::ApiResult;
use crate::routes::{run_json, run_url};
use crate::runs::{FrameMeta, RunHandle, RunRecord, RunStatus};
use crate::state::SharedState;

/// Frames up to this size travel inline as base64; larger ones by URL only.
pub const INLINE_LIMIT: usize = 64 * 1024;

#[derive(Deserialize)]
pub struct PreviewQuery {
    from: Option<usize>,
}

struct Cursor {
    state: SharedState,
    handle: Arc<RunHandle>,
    rx: watch::Receiver<usize>,
    next: usize,
}

async fn frame_event(state: &SharedState, handle: &RunHandle, frame: &FrameMeta) -> Event {
    let url = format!(
        "{}/frames/{}",
        run_url(&handle.session_id, &handle.run_id),
        frame.index
    );
    let mut data = json!({
        "index": frame.index,
        "step": frame.step,
        "stream": frame.stream,
        "png_url": url,
    });
    if frame.bytes <= INLINE_LIMIT {
        let path = state
            .store
            .frame_path(&handle.session_id, &handle.run_id, frame.index);
        if let Ok(bytes) = tokio::fs::read(path).await {
            data["png"] = json!(base64::engine::general_purpose::STANDARD.encode(bytes));
        }
    }
    Event::default()
        .event("frame")
        .id(frame.index.to_string())
        .json_data(data)
        .expect("frame event serializes")
}

fn end_event(record: &RunRecord) -> Event {
    let name = match record.status {
        RunStatus::Done => "done",
        _ => "failed",
    };
    Event::default()
        .event(name)
        .json_data(run_json(record))
        .expect("run record serializes")
}

/// Server-sent events for one run: `frame` events (id = frame index) in
/// production order, then a single `done` or `failed` event. Resumes after
/// `Last-Event-ID`, or from `?from=<index>`.
pub async fn preview(
    State(state): State<SharedState>,
    Path((sid, rid)): Path<(String, String)>,
    Query(q): Query<PreviewQuery>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let handle = state.run(&sid, &rid)?;
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<usize>().ok())
        .map(|id| id + 1);
    let cursor = Cursor {
        rx: handle.subscribe(),
        state,
        handle,
        next: resume.or(q.from).unwrap_or(0),
    };
    let stream = futures::stream::unfold(Some(cursor), |cursor| async move {
        let mut c = cursor?;
        loop {
            c.rx.borrow_and_update();
            match c.handle.poll(c.next) {
                (Some(frame), _) => {
                    let event = frame_event(&c.state, &c.handle, &frame).await;
                    c.next += 1;
                    return Some((Ok(event), Some(c)));
                }
                (None, Some(record)) => return Some((Ok(end_event(&record)), None)),
                (None, None) => {
                    // The handle owns the sender, so this only fails if the
                    // run vanished; re-polling then reports its last state.
                    let _ = c.rx.changed().await;
                }
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
