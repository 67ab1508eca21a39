//! HTTP session service for region-targeted diffusion editing.
//!
//! All endpoints live under `/v1`. Sessions, masks and runs persist under a
//! data directory so any completed run can be replayed bit for bit.

pub mod error;
pub mod routes;
pub mod runs;
pub mod session;
pub mod sse;
pub mod state;
pub mod store;

pub use routes::router;
pub use state::{AppState, Config, SharedState};

use tokio::net::TcpListener;

/// Serves the API on `listener` until the future is dropped or fails.
pub async fn serve(listener: TcpListener, config: Config) -> std::io::Result<()> {
    let state = AppState::open(config)?;
    axum::serve(listener, router(state)).await
}
