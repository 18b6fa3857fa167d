use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sr_core::hybrid::Provenance;

use crate::engine::{Engine, ServiceError};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match self {
            ServiceError::TooLarge(_) => StatusCode::PAYLOAD_TOO_LARGE,
            ServiceError::NoAssets => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct MessageRequest {
    session_id: String,
    text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreJson {
    pub id: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageResponse {
    pub clusters: Vec<ScoreJson>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterJson {
    pub id: u32,
    pub q: f64,
    pub p_trie: f64,
    pub p_reply: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickerJson {
    pub id: String,
    pub label: String,
    pub cluster: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub clusters: Vec<ClusterJson>,
    pub stickers: Vec<StickerJson>,
    pub latency_ms: f64,
    pub version: String,
}

/// Bundle files base64-encoded exactly as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetBundleJson {
    pub version: String,
    pub trie: String,
    pub stickers: String,
    pub clusters: String,
    pub combiner: String,
}

#[derive(Debug, Deserialize)]
struct PredictQuery {
    #[serde(default)]
    session_id: String,
    #[serde(default)]
    typed: String,
}

#[derive(Debug, Deserialize)]
struct AssetsQuery {
    #[serde(default)]
    since: String,
}

async fn message(State(engine): State<Arc<Engine>>, Json(req): Json<MessageRequest>) -> Result<Json<MessageResponse>, ServiceError> {
    let (scores, version) = engine.route_message(&req.session_id, &req.text)?;
    let mut clusters: Vec<ScoreJson> = scores.into_iter().map(|(id, score)| ScoreJson { id, score }).collect();
    clusters.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    Ok(Json(MessageResponse { clusters, version }))
}

async fn predict(State(engine): State<Arc<Engine>>, Query(q): Query<PredictQuery>) -> Result<Json<PredictResponse>, ServiceError> {
    let out = engine.predict(&q.session_id, &q.typed)?;
    Ok(Json(PredictResponse {
        clusters: out
            .clusters
            .iter()
            .map(|c| ClusterJson {
                id: c.cluster,
                q: c.q,
                p_trie: c.p_trie,
                p_reply: c.p_reply,
                provenance: c.provenance,
            })
            .collect(),
        stickers: out
            .stickers
            .into_iter()
            .map(|(s, label)| StickerJson {
                id: s.sticker_id,
                label,
                cluster: s.cluster,
            })
            .collect(),
        latency_ms: out.latency_ms,
        version: out.version,
    }))
}

async fn assets(State(engine): State<Arc<Engine>>, Query(q): Query<AssetsQuery>) -> Result<Response, ServiceError> {
    let snap = engine.snapshot()?;
    let a = &snap.assets;
    if q.since == a.version {
        return Ok(StatusCode::NOT_MODIFIED.into_response());
    }
    Ok(Json(AssetBundleJson {
        version: a.version.clone(),
        trie: B64.encode(&a.files.trie),
        stickers: B64.encode(&a.files.stickers),
        clusters: B64.encode(&a.files.clusters),
        combiner: B64.encode(&a.files.combiner),
    })
    .into_response())
}

async fn health(State(engine): State<Arc<Engine>>) -> Json<serde_json::Value> {
    let version = engine.version();
    Json(serde_json::json!({
        "status": "ok",
        "assets_loaded": version.is_some(),
        "version": version,
        "sessions": engine.sessions.len(),
    }))
}

async fn reload(State(engine): State<Arc<Engine>>) -> Result<Json<serde_json::Value>, ServiceError> {
    let version = engine.reload()?;
    Ok(Json(serde_json::json!({ "version": version })))
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/v1/message", post(message))
        .route("/v1/predict", get(predict))
        .route("/v1/assets", get(assets))
        .route("/v1/health", get(health))
        .route("/v1/reload", post(reload))
        .with_state(engine)
}
