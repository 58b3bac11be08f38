//! HTTP API for building admissible architectures layer by layer.

mod error;
mod routes;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::routing::{delete, get, post};
use axum::Router;
use parking_lot::Mutex;
use tokio::sync::Semaphore;
use tower_http::cors::CorsLayer;

use gdnn_core::admissibility::{Calculus, CountTable};
use gdnn_core::SubgroupPair;

pub use error::{ApiError, ApiResult};

#[derive(Clone, Debug)]
pub struct Config {
    /// Sessions idle for longer than this are dropped.
    pub session_ttl: Duration,
    /// Concurrent count jobs.
    pub count_workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2);
        Config { session_ttl: Duration::from_secs(24 * 3600), count_workers: workers.max(1) }
    }
}

/// One irrep of a session layer, by pair-class id.
#[derive(Clone, Debug)]
pub(crate) struct Entry {
    pub class: usize,
    pub pair: SubgroupPair,
    pub mult: usize,
}

pub(crate) struct Session {
    pub group: String,
    pub calc: Arc<Calculus>,
    pub layers: Vec<Vec<Entry>>,
    pub channels: usize,
    pub batchnorm: bool,
}

impl Session {
    pub fn pairs(&self) -> Vec<Vec<SubgroupPair>> {
        self.layers.iter().map(|l| l.iter().map(|e| e.pair).collect()).collect()
    }

    /// The last layer is the trivial representation, so nothing more can follow.
    pub fn complete(&self) -> bool {
        let full = self.calc.group().full();
        self.layers.last().is_some_and(|l| l.len() == 1 && l[0].pair.h == full && l[0].pair.k == full)
    }
}

pub(crate) enum Job {
    Running,
    Done(CountTable),
    Failed(String),
}

pub(crate) struct JobRecord {
    pub group: String,
    pub mode: String,
    pub max_depth: usize,
    pub state: Job,
}

/// A session and when it was last used.
type SessionSlot = (Arc<Mutex<Session>>, Instant);

pub struct AppState {
    pub(crate) config: Config,
    calcs: Mutex<HashMap<String, Arc<Calculus>>>,
    sessions: Mutex<HashMap<String, SessionSlot>>,
    pub(crate) jobs: Mutex<HashMap<String, JobRecord>>,
    next_id: AtomicU64,
    pub(crate) count_permits: Arc<Semaphore>,
}

impl AppState {
    pub fn new(config: Config) -> Arc<AppState> {
        Arc::new(AppState {
            count_permits: Arc::new(Semaphore::new(config.count_workers)),
            config,
            calcs: Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    pub(crate) fn fresh_id(&self, prefix: &str) -> String {
        format!("{prefix}{}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    /// Shared θ tables per group, created on first use.
    pub(crate) fn calc(&self, name: &str) -> ApiResult<Arc<Calculus>> {
        let group = gdnn_core::named::shared(name)?;
        let mut calcs = self.calcs.lock();
        Ok(calcs.entry(group.name().to_string()).or_insert_with(|| Arc::new(Calculus::new(group))).clone())
    }

    pub(crate) fn insert_session(&self, id: String, s: Session) {
        self.sessions.lock().insert(id, (Arc::new(Mutex::new(s)), Instant::now()));
    }

    pub(crate) fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.sweep();
        let mut sessions = self.sessions.lock();
        let (s, touched) = sessions.get_mut(id).ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))?;
        *touched = Instant::now();
        Ok(s.clone())
    }

    /// Drops sessions that have been idle longer than the configured time.
    pub fn sweep(&self) -> usize {
        let ttl = self.config.session_ttl;
        let mut sessions = self.sessions.lock();
        let before = sessions.len();
        sessions.retain(|_, (_, touched)| touched.elapsed() <= ttl);
        before - sessions.len()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().len()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/groups", get(routes::list_groups))
        .route("/api/groups/{g}/pairs", get(routes::group_pairs))
        .route("/api/sessions", post(routes::create_session))
        .route("/api/sessions/{id}", get(routes::get_session))
        .route("/api/sessions/{id}/admissible-next", get(routes::admissible_next))
        .route("/api/sessions/{id}/layers", post(routes::add_layer))
        .route("/api/sessions/{id}/layers/last", delete(routes::remove_last_layer))
        .route("/api/sessions/{id}/export", get(routes::export))
        .route("/api/sessions/{id}/smoke", post(routes::smoke))
        .route("/api/pairs/{g}/{pair}/pattern", get(routes::pattern))
        .route("/api/count", post(routes::start_count))
        .route("/api/count/{job}", get(routes::count_status))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves the API until the process is stopped.
pub async fn serve(addr: SocketAddr, config: Config) -> std::io::Result<()> {
    let state = AppState::new(config);
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sweeper.sweep();
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
