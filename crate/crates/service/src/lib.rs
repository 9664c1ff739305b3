//! HTTP facade for interactive restoration planning.
//!
//! Operators upload a problem, solve it in the background, then open a
//! session that follows the optimal policy while field outcomes are
//! reported. Every endpoint speaks JSON; errors share one body shape
//! ([`ErrorBody`]).

mod error;
mod problems;
mod sessions;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::routing::{get, post};
use axum::Router;
use restoration_core::mdp_builder::DEFAULT_STATE_CAP;
use restoration_core::OptFlags;
use tower_http::services::ServeDir;

pub use error::{violated_axiom, ApiError, ErrorBody};
pub use problems::{JobStatus, JobView, SolveRequest, SolveSummary};
pub use sessions::{CommandView, ReportRequest, SessionView, TeamView};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Upper bound on built states per solve request.
    pub max_states: usize,
    /// Reductions used when a solve request names none.
    pub default_flags: OptFlags,
    /// Directory served at `/` (the operator console build), if any.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { max_states: DEFAULT_STATE_CAP, default_flags: OptFlags::ALL, static_dir: None }
    }
}

/// Shared service state. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Shared>,
}

struct Shared {
    config: ServiceConfig,
    next_id: AtomicU64,
    problems: Mutex<HashMap<String, problems::ProblemEntry>>,
    jobs: Mutex<HashMap<String, problems::JobEntry>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<sessions::Session>>>>,
}

/// Poisoning only follows a panic in another handler; the maps stay usable.
fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            inner: Arc::new(Shared {
                config,
                next_id: AtomicU64::new(1),
                problems: Mutex::new(HashMap::new()),
                jobs: Mutex::new(HashMap::new()),
                sessions: Mutex::new(HashMap::new()),
            }),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    fn fresh_id(&self, prefix: &str) -> String {
        format!("{prefix}{}", self.inner.next_id.fetch_add(1, Ordering::Relaxed))
    }
}

pub fn router(state: AppState) -> Router {
    let static_dir = state.config().static_dir.clone();
    let api = Router::new()
        .route("/problems", post(problems::create_problem))
        .route("/problems/{id}", get(problems::get_problem))
        .route("/problems/{id}/solve", post(problems::start_solve))
        .route("/problems/{id}/partition", post(problems::partition))
        .route("/jobs/{id}", get(problems::get_job))
        .route("/sessions", post(sessions::create_session))
        .route("/sessions/{id}", get(sessions::get_session))
        .route("/sessions/{id}/report", post(sessions::report))
        .route("/sessions/{id}/whatif", get(sessions::what_if))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(config))).await
}
