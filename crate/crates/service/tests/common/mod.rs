#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use brush_core::denoise::{Backend, RemoteDenoiser};
use brush_core::masks::save_mask_png;
use brush_core::numerics::io::decode_latent;
use brush_core::{AnalyticDenoiser, GaussianMixture, Latent, MaskRaster, Shape};
use brush_service::{router, AppState, Config};
use serde_json::{json, Value};

pub fn shape() -> Shape {
    Shape::new(3, 16, 16).unwrap()
}

pub fn analytic() -> Backend {
    Backend::Analytic(Arc::new(AnalyticDenoiser::new(
        GaussianMixture::patterns(shape(), 4, 0.01).unwrap(),
    )))
}

pub fn remote(addr: std::net::SocketAddr) -> Backend {
    Backend::Remote(Arc::new(
        RemoteDenoiser::connect(addr)
            .unwrap()
            .with_timeout(Duration::from_secs(2)),
    ))
}

pub struct Server {
    pub base: String,
    pub client: reqwest::Client,
    task: tokio::task::JoinHandle<()>,
}

impl Drop for Server {
    fn drop(&mut self) {
        self.task.abort();
    }
}

pub async fn start(dir: &Path, backend: Backend) -> Server {
    start_capped(dir, backend, 64).await
}

pub async fn start_capped(dir: &Path, backend: Backend, max_sessions: usize) -> Server {
    let state = AppState::open(Config {
        data_dir: dir.to_path_buf(),
        backend,
        max_sessions,
    })
    .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let task = tokio::spawn(async move {
        axum::serve(listener, router(state)).await.unwrap();
    });
    Server {
        base: format!("http://{addr}/v1"),
        client: reqwest::Client::new(),
        task,
    }
}

/// One parsed server-sent event.
#[derive(Debug, Clone)]
pub struct SseEvent {
    pub event: String,
    pub id: Option<String>,
    pub data: Value,
}

pub fn parse_sse(text: &str) -> Vec<SseEvent> {
    let mut out = Vec::new();
    for block in text.split("\n\n") {
        let mut event = String::from("message");
        let mut id = None;
        let mut data = String::new();
        for line in block.lines() {
            if let Some(v) = line.strip_prefix("event:") {
                event = v.trim().to_string();
            } else if let Some(v) = line.strip_prefix("id:") {
                id = Some(v.trim().to_string());
            } else if let Some(v) = line.strip_prefix("data:") {
                data.push_str(v.trim_start());
            }
        }
        if !data.is_empty() {
            out.push(SseEvent {
                event,
                id,
                data: serde_json::from_str(&data).unwrap(),
            });
        }
    }
    out
}

pub fn mask_png(f: impl FnMut(usize, usize) -> f32) -> Vec<u8> {
    save_mask_png(&MaskRaster::from_fn(32, 32, f).unwrap()).unwrap()
}

pub fn center_mask() -> Vec<u8> {
    mask_png(|r, c| {
        if (8..24).contains(&r) && (8..24).contains(&c) {
            1.0
        } else {
            0.0
        }
    })
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn create(&self, body: Value) -> Value {
        let resp = self
            .client
            .post(self.url("/sessions"))
            .json(&body)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 201, "{}", resp.text().await.unwrap());
        resp.json().await.unwrap()
    }

    pub async fn put_mask(
        &self,
        sid: &str,
        mid: &str,
        query: &str,
        png: Vec<u8>,
    ) -> reqwest::Response {
        self.client
            .put(self.url(&format!("/sessions/{sid}/masks/{mid}?{query}")))
            .body(png)
            .send()
            .await
            .unwrap()
    }

    pub async fn run(&self, sid: &str, mode: &str) -> String {
        let resp = self
            .client
            .post(self.url(&format!("/sessions/{sid}/run")))
            .json(&json!({ "mode": mode }))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 202, "{}", resp.text().await.unwrap());
        resp.json::<Value>().await.unwrap()["run_id"]
            .as_str()
            .unwrap()
            .to_string()
    }

    /// Follows the preview stream to its end and returns every event.
    pub async fn events(&self, sid: &str, rid: &str) -> Vec<SseEvent> {
        let text = self
            .client
            .get(self.url(&format!("/sessions/{sid}/runs/{rid}/preview")))
            .send()
            .await
            .unwrap()
            .text()
            .await
            .unwrap();
        parse_sse(&text)
    }

    pub async fn wait(&self, sid: &str, rid: &str) -> Value {
        let events = self.events(sid, rid).await;
        let last = events.last().expect("stream ends with a completion event");
        assert!(last.event == "done" || last.event == "failed", "{last:?}");
        self.get_json(&format!("/sessions/{sid}/runs/{rid}")).await
    }

    pub async fn get_json(&self, path: &str) -> Value {
        self.client
            .get(self.url(path))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap()
    }

    pub async fn bytes(&self, path: &str) -> Vec<u8> {
        let resp = self.client.get(self.url(path)).send().await.unwrap();
        assert!(resp.status().is_success(), "{path}: {}", resp.status());
        resp.bytes().await.unwrap().to_vec()
    }

    pub async fn latent(&self, sid: &str, rid: &str) -> Latent {
        decode_latent(
            &self
                .bytes(&format!("/sessions/{sid}/runs/{rid}/latent"))
                .await,
        )
        .unwrap()
    }
}
