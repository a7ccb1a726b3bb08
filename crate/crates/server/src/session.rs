use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{Duration, Instant};

use molscope_core::analysis::{ClusterResponse, EmbedResponse, FingerprintRecord, FingerprintStats};
use molscope_core::docstore::Document;
use molscope_core::embed::{ConstraintSet, EmbedMethod, FeatureSet, Interaction, InteractiveSession};
use molscope_core::quality::QualityReport;
use serde::Serialize;
use tokio::sync::{broadcast, Notify};

use crate::ApiError;

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(60 * 60);
const EVENT_BUFFER: usize = 256;

/// Pushed to every subscriber of a session.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Embedding { version: u64, coords: Vec<[f64; 2]>, constraints: ConstraintSet },
    Error { code: String, message: String },
}

impl From<ApiError> for Event {
    fn from(e: ApiError) -> Self {
        Event::Error { code: e.code, message: e.message }
    }
}

/// The session's current layout as returned by `GET /sessions/{id}/embedding`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingState {
    pub method: EmbedMethod,
    pub version: u64,
    pub coords: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSet>,
    /// Dropped once an interaction moves the layout.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityReport>,
}

pub(crate) struct Fingerprints {
    pub records: Vec<FingerprintRecord>,
    pub features: FeatureSet,
    pub stats: FingerprintStats,
}

#[derive(Default)]
pub(crate) struct SessionData {
    pub fingerprints: Option<Fingerprints>,
    pub clustering: Option<ClusterResponse>,
    pub embedding: Option<EmbeddingState>,
    pub live: Option<InteractiveSession>,
    /// Last version handed out; shared by REST embeds and interactions.
    pub version: u64,
}

impl SessionData {
    pub fn next_version(&mut self) -> u64 {
        self.version += 1;
        self.version
    }

    /// Replaces the layout with a fresh embed result.
    pub fn install(&mut self, mut response: EmbedResponse, live: Option<InteractiveSession>) -> EmbedResponse {
        response.version = self.next_version();
        self.embedding = Some(EmbeddingState {
            method: response.method,
            version: response.version,
            coords: response.coords.clone(),
            constraints: response.constraints.clone(),
            quality: response.quality,
        });
        self.live = live;
        response
    }

    /// Invalidates everything derived from the fingerprints.
    pub fn set_fingerprints(&mut self, fps: Fingerprints) {
        self.fingerprints = Some(fps);
        self.clustering = None;
        self.embedding = None;
        self.live = None;
    }
}

/// Pending interactions. A move for a control index replaces an earlier
/// pending move for the same index unless a topology change sits between them.
#[derive(Default)]
pub(crate) struct Mailbox {
    queue: Mutex<VecDeque<Interaction>>,
    notify: Notify,
    closed: AtomicBool,
}

impl Mailbox {
    pub fn push(&self, msg: Interaction) {
        let mut q = self.queue.lock().unwrap_or_else(|e| e.into_inner());
        if let Interaction::MoveControl { index, .. } = msg {
            let pending = q
                .iter_mut()
                .rev()
                .take_while(|m| !m.changes_topology())
                .find(|m| matches!(m, Interaction::MoveControl { index: j, .. } if *j == index));
            if let Some(slot) = pending {
                *slot = msg;
                return;
            }
        }
        q.push_back(msg);
        drop(q);
        self.notify.notify_one();
    }

    pub async fn next(&self) -> Option<Interaction> {
        loop {
            if self.closed.load(Ordering::Acquire) {
                return None;
            }
            if let Some(m) = self.queue.lock().unwrap_or_else(|e| e.into_inner()).pop_front() {
                return Some(m);
            }
            self.notify.notified().await;
        }
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
        self.notify.notify_one();
    }
}

pub struct Session {
    pub id: String,
    pub collection: String,
    pub docs: Vec<Document>,
    pub(crate) data: Mutex<SessionData>,
    pub(crate) events: broadcast::Sender<Event>,
    pub(crate) mailbox: Mailbox,
    last_active: Mutex<Instant>,
}

impl Session {
    pub(crate) fn new(id: String, collection: String, docs: Vec<Document>) -> Self {
        Session {
            id,
            collection,
            docs,
            data: Mutex::new(SessionData::default()),
            events: broadcast::channel(EVENT_BUFFER).0,
            mailbox: Mailbox::default(),
            last_active: Mutex::new(Instant::now()),
        }
    }

    pub(crate) fn data(&self) -> MutexGuard<'_, SessionData> {
        self.data.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn touch(&self) {
        *self.last_active.lock().unwrap_or_else(|e| e.into_inner()) = Instant::now();
    }

    pub fn idle_for(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.last_active.lock().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn has_live_embedding(&self) -> bool {
        self.data().live.is_some()
    }

    /// Applies one interaction to the live cKPCA state.
    pub(crate) fn apply(&self, msg: &Interaction) -> Result<Event, ApiError> {
        let mut data = self.data();
        let live = data.live.as_mut().ok_or_else(ApiError::not_ckpca)?;
        let e = live.apply(msg)?;
        let coords = e.coords.clone();
        let constraints = live.constraints().clone();
        let version = data.next_version();
        if let Some(state) = data.embedding.as_mut() {
            state.version = version;
            state.coords = coords.clone();
            state.constraints = Some(constraints.clone());
            state.quality = None;
        }
        Ok(Event::Embedding { version, coords, constraints })
    }

    /// Solver loop: one interaction at a time, each result broadcast.
    pub(crate) async fn run_worker(self: Arc<Self>) {
        while let Some(msg) = self.mailbox.next().await {
            let session = self.clone();
            let event = match tokio::task::spawn_blocking(move || session.apply(&msg)).await {
                Ok(Ok(event)) => event,
                Ok(Err(e)) => e.into(),
                Err(join) => ApiError::new("internal", join.to_string()).into(),
            };
            // no subscribers is fine
            let _ = self.events.send(event);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ServerConfig {
    pub idle_timeout: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { idle_timeout: DEFAULT_IDLE_TIMEOUT }
    }
}

#[derive(Default)]
pub struct SessionRegistry {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl SessionRegistry {
    /// Registers a session and starts its solver worker (needs a tokio runtime).
    pub fn insert(&self, collection: String, docs: Vec<Document>) -> Arc<Session> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Arc::new(Session::new(id.clone(), collection, docs));
        tokio::spawn(session.clone().run_worker());
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, session.clone());
        session
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        let found = self.sessions.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned();
        let session = found.ok_or_else(|| ApiError::unknown_session(id))?;
        session.touch();
        Ok(session)
    }

    pub fn remove(&self, id: &str) -> Result<(), ApiError> {
        let removed = self.sessions.write().unwrap_or_else(|e| e.into_inner()).remove(id);
        let session = removed.ok_or_else(|| ApiError::unknown_session(id))?;
        session.mailbox.close();
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions idle for longer than `timeout`; returns how many went.
    pub fn evict_idle(&self, now: Instant, timeout: Duration) -> usize {
        let mut map = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        let stale: Vec<String> = map.iter().filter(|(_, s)| s.idle_for(now) > timeout).map(|(id, _)| id.clone()).collect();
        for id in &stale {
            if let Some(s) = map.remove(id) {
                s.mailbox.close();
            }
        }
        stale.len()
    }
}
