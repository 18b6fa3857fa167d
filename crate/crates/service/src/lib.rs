//! Local deployment of the recommender.
//!
//! The server scores replies when a message is routed to a session, keeps
//! those scores per session, and answers per-keystroke predictions by
//! combining them with the trie. Clients can download the asset bundle.
//! Assets are swapped atomically on reload.

mod engine;
mod http;

pub use engine::{Engine, PredictOutput, ServiceError, SessionStore, DEFAULT_CACHE_CAPACITY, MAX_TEXT_BYTES};
pub use http::{router, AssetBundleJson, ClusterJson, MessageResponse, PredictResponse, StickerJson};

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

/// Environment variable that overrides the asset directory.
pub const ASSETS_ENV: &str = "SR_ASSETS_DIR";

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub assets: PathBuf,
    pub addr: SocketAddr,
    pub geo: String,
    pub cache_capacity: usize,
}

/// Resolves the asset directory: the environment override wins, then
/// `<dir>/<geo>` when that exists, else `dir`.
pub fn resolve_assets_dir(dir: PathBuf, geo: &str) -> PathBuf {
    if let Ok(env) = std::env::var(ASSETS_ENV) {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    let per_geo = dir.join(geo);
    if !geo.is_empty() && per_geo.is_dir() {
        per_geo
    } else {
        dir
    }
}

/// Binds and serves until the process ends.
pub async fn serve(config: ServeConfig) -> std::io::Result<()> {
    let engine = Arc::new(Engine::open(config.assets.clone(), config.cache_capacity));
    match engine.version() {
        Some(v) => log::info!("serving {} assets version {v}", config.geo),
        None => log::warn!("no assets loaded from {}", config.assets.display()),
    }
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(engine)).await
}
