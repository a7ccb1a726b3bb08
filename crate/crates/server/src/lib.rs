//! HTTP and WebSocket front end over the shared analysis layer.
//!
//! Sessions hold a fetched working set plus whatever has been computed on it.
//! Each session owns one solver task; interaction messages reach it through a
//! coalescing mailbox and results fan out over a broadcast channel.

mod error;
mod routes;
mod session;
mod ws;

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::routing::{get, post};
use axum::Router;
use molscope_core::docstore::Store;
use tokio::net::TcpListener;

pub use error::ApiError;
pub use session::{EmbeddingState, Event, ServerConfig, Session, SessionRegistry, DEFAULT_IDLE_TIMEOUT};

pub struct AppState {
    pub store: Arc<Store>,
    pub sessions: SessionRegistry,
    pub config: ServerConfig,
}

impl AppState {
    pub fn new(store: Arc<Store>, config: ServerConfig) -> Arc<Self> {
        Arc::new(AppState { store, sessions: SessionRegistry::default(), config })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/collections", get(routes::list_collections))
        .route("/collections/{collection}/fields", get(routes::collection_fields))
        .route("/collections/{collection}/summary", post(routes::summarize))
        .route("/collections/{collection}/fetch", post(routes::fetch))
        .route("/sessions", post(routes::create_session))
        .route("/sessions/{id}", get(routes::session_info).delete(routes::delete_session))
        .route("/sessions/{id}/fingerprint", post(routes::fingerprint))
        .route("/sessions/{id}/fingerprints", get(routes::fingerprints))
        .route("/sessions/{id}/cluster", post(routes::cluster))
        .route("/sessions/{id}/embed", post(routes::embed))
        .route("/sessions/{id}/embedding", get(routes::current_embedding))
        .route("/sessions/{id}/search", get(routes::search))
        .route("/sessions/{id}/interact", get(ws::interact))
        .fallback(routes::not_found)
        .with_state(state)
}

/// Periodically drops idle sessions.
pub fn spawn_evictor(state: Arc<AppState>) -> tokio::task::JoinHandle<()> {
    let period = (state.config.idle_timeout / 4).clamp(Duration::from_millis(10), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let gone = state.sessions.evict_idle(Instant::now(), state.config.idle_timeout);
            if gone > 0 {
                tracing::info!(gone, "evicted idle sessions");
            }
        }
    })
}

pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    let evictor = spawn_evictor(state.clone());
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let result = axum::serve(listener, router(state)).await;
    evictor.abort();
    result
}
