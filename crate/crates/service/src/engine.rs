use std::collections::{BTreeMap, HashMap};
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use lru::LruCache;
use sr_core::assets::Assets;
use sr_core::hybrid::{predict, ClusterScore};
use sr_core::stickers::{recommend, RecommendedSticker};

pub const MAX_TEXT_BYTES: usize = 1024;
pub const DEFAULT_CACHE_CAPACITY: usize = 10_000;
const TOP_K: usize = 3;
const STICKERS_SHOWN: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum ServiceError {
    TooLarge(usize),
    NoAssets,
    Internal(String),
}

impl std::fmt::Display for ServiceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServiceError::TooLarge(n) => write!(f, "text of {n} bytes exceeds {MAX_TEXT_BYTES}"),
            ServiceError::NoAssets => write!(f, "assets not loaded"),
            ServiceError::Internal(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for ServiceError {}

/// An immutable asset snapshot plus the reply-score cache built on it.
pub struct Snapshot {
    pub assets: Assets,
    cache: Mutex<LruCache<String, BTreeMap<u32, f64>>>,
}

impl Snapshot {
    fn new(assets: Assets, capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).unwrap();
        Snapshot {
            assets,
            cache: Mutex::new(LruCache::new(cap)),
        }
    }

    /// Reply scores above the threshold; empty without a reply model.
    pub fn reply_scores(&self, text: &str) -> Result<BTreeMap<u32, f64>, ServiceError> {
        if let Some(hit) = self.cache.lock().unwrap().get(text) {
            return Ok(hit.clone());
        }
        let scores = match &self.assets.reply {
            Some(model) => model.reply_scores(text).map_err(|e| ServiceError::Internal(e.to_string()))?,
            None => BTreeMap::new(),
        };
        self.cache.lock().unwrap().put(text.to_string(), scores.clone());
        Ok(scores)
    }
}

#[derive(Debug, Default)]
struct Session {
    last_received: Option<String>,
    prev_scores: BTreeMap<u32, f64>,
    /// Asset version the scores were computed under.
    version: String,
}

/// Sessions by id; each session is locked on its own so calls within a
/// session are serialized while different sessions proceed in parallel.
#[derive(Default)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    fn get(&self, id: &str) -> Arc<Mutex<Session>> {
        self.sessions.lock().unwrap().entry(id.to_string()).or_default().clone()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct PredictOutput {
    pub clusters: Vec<ClusterScore>,
    pub stickers: Vec<(RecommendedSticker, String)>,
    pub latency_ms: f64,
    pub version: String,
}

pub struct Engine {
    dir: PathBuf,
    capacity: usize,
    current: RwLock<Option<Arc<Snapshot>>>,
    pub sessions: SessionStore,
}

impl Engine {
    /// Loads assets from `dir`; a missing or broken directory leaves the
    /// engine empty until a successful reload.
    pub fn open(dir: PathBuf, capacity: usize) -> Self {
        let engine = Engine {
            dir,
            capacity,
            current: RwLock::new(None),
            sessions: SessionStore::default(),
        };
        if let Err(e) = engine.reload() {
            log::warn!("initial asset load failed: {e}");
        }
        engine
    }

    pub fn from_assets(assets: Assets, capacity: usize) -> Self {
        Engine {
            dir: PathBuf::new(),
            capacity,
            current: RwLock::new(Some(Arc::new(Snapshot::new(assets, capacity)))),
            sessions: SessionStore::default(),
        }
    }

    /// Reads the asset directory again and swaps it in as one unit.
    pub fn reload(&self) -> Result<String, ServiceError> {
        let assets = Assets::load(&self.dir).map_err(|e| ServiceError::Internal(e.to_string()))?;
        Ok(self.install(assets))
    }

    /// Swaps in `assets`, returning the new version.
    pub fn install(&self, assets: Assets) -> String {
        let version = assets.version.clone();
        *self.current.write().unwrap() = Some(Arc::new(Snapshot::new(assets, self.capacity)));
        version
    }

    pub fn snapshot(&self) -> Result<Arc<Snapshot>, ServiceError> {
        self.current.read().unwrap().clone().ok_or(ServiceError::NoAssets)
    }

    pub fn version(&self) -> Option<String> {
        self.snapshot().ok().map(|s| s.assets.version.clone())
    }

    /// A message arrived for `session_id`: score likely replies and keep
    /// them for the session's next keystrokes.
    pub fn route_message(&self, session_id: &str, text: &str) -> Result<(BTreeMap<u32, f64>, String), ServiceError> {
        check_size(text)?;
        let snap = self.snapshot()?;
        let scores = snap.reply_scores(text)?;
        let session = self.sessions.get(session_id);
        let mut s = session.lock().unwrap();
        s.last_received = Some(text.to_string());
        s.prev_scores = scores.clone();
        s.version = snap.assets.version.clone();
        Ok((scores, snap.assets.version.clone()))
    }

    pub fn predict(&self, session_id: &str, typed: &str) -> Result<PredictOutput, ServiceError> {
        check_size(typed)?;
        let start = Instant::now();
        let snap = self.snapshot()?;
        let session = self.sessions.get(session_id);
        let prev_scores = {
            let mut s = session.lock().unwrap();
            if s.version != snap.assets.version {
                // scores from an older asset set refer to stale cluster ids
                s.prev_scores = match s.last_received.clone() {
                    Some(text) => snap.reply_scores(&text)?,
                    None => BTreeMap::new(),
                };
                s.version = snap.assets.version.clone();
            }
            s.prev_scores.clone()
        };
        let a = &snap.assets;
        let (ranked, _) = predict(&prev_scores, typed, &a.trie, &a.weights, TOP_K);
        let ids: Vec<u32> = ranked.iter().map(|c| c.cluster).collect();
        let stickers = recommend(&ids, &a.mapping, STICKERS_SHOWN)
            .stickers
            .into_iter()
            .map(|s| {
                let label = a.mapping.label(&s.sticker_id).to_string();
                (s, label)
            })
            .collect();
        Ok(PredictOutput {
            clusters: ranked,
            stickers,
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
            version: a.version.clone(),
        })
    }
}

fn check_size(text: &str) -> Result<(), ServiceError> {
    if text.len() > MAX_TEXT_BYTES {
        return Err(ServiceError::TooLarge(text.len()));
    }
    Ok(())
}
