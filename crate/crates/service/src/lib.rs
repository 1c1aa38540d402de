//! HTTP job service: scene upload, footprints, queued coverage jobs with a
//! persistent journal, and synchronous single-link simulation.

mod api;
mod footprint;
mod jobs;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use raytwin::scene::Scene;
use tokio::sync::{mpsc, Semaphore};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;
use uuid::Uuid;

pub use api::{CoverageRequest, EndpointSpec, LinkRequest, LinkResponse, TxSpec};
pub use footprint::{footprint, Footprint, FootprintPolygon};
pub use jobs::{JobRecord, JobStatus};

pub const API_SCHEMA_VERSION: u32 = 1;
pub const MAX_SCENE_BYTES: usize = 100 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("data directory {path}: {source}")]
    DataDir { path: PathBuf, source: std::io::Error },
    #[error("journal: {0}")]
    Journal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Coverage jobs run concurrently; with zero, jobs stay queued.
    pub workers: usize,
    /// Concurrent `/api/link` requests before answering 503.
    pub link_capacity: usize,
    /// Static planner build served at `/ui`; a placeholder page otherwise.
    pub ui_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig { data_dir: data_dir.into(), workers: 2, link_capacity: 4, ui_dir: None }
    }
}

pub(crate) struct StoredScene {
    pub scene: Arc<Scene>,
    pub created_unix_ms: u64,
}

pub(crate) struct AppState {
    pub config: ServiceConfig,
    pub scenes: RwLock<HashMap<Uuid, StoredScene>>,
    pub jobs: Mutex<jobs::JobTable>,
    pub queue: mpsc::UnboundedSender<Uuid>,
    pub(crate) pending: Arc<tokio::sync::Mutex<mpsc::UnboundedReceiver<Uuid>>>,
    pub link_slots: Arc<Semaphore>,
}

impl AppState {
    fn scene_dir(&self) -> PathBuf {
        self.config.data_dir.join("scenes")
    }

    fn result_path(&self, id: Uuid) -> PathBuf {
        self.config.data_dir.join("results").join(format!("{id}.json"))
    }
}

/// A running service instance: the router plus its background workers.
pub struct Service {
    state: Arc<AppState>,
}

pub(crate) fn now_unix_ms() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn create_dir(path: &Path) -> Result<(), ServiceError> {
    std::fs::create_dir_all(path).map_err(|source| ServiceError::DataDir { path: path.to_path_buf(), source })
}

fn load_scenes(dir: &Path) -> Result<HashMap<Uuid, StoredScene>, ServiceError> {
    let mut out = HashMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(id) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| Uuid::parse_str(s).ok()) else { continue };
        let text = std::fs::read_to_string(&path)?;
        match Scene::from_json(&text) {
            Ok(scene) => {
                let created = std::fs::metadata(&path)?
                    .modified()
                    .ok()
                    .and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok())
                    .map_or(0, |d| d.as_millis() as u64);
                out.insert(id, StoredScene { scene: Arc::new(scene), created_unix_ms: created });
            }
            Err(e) => log::warn!("skipping stored scene {}: {e}", path.display()),
        }
    }
    Ok(out)
}

impl Service {
    /// Open (or create) the data directory, replay the job journal and
    /// start the workers. Jobs that were queued or running when the
    /// previous instance stopped are queued again. Must be called inside a
    /// Tokio runtime.
    pub fn open(config: ServiceConfig) -> Result<Service, ServiceError> {
        for sub in ["", "scenes", "results"] {
            create_dir(&config.data_dir.join(sub))?;
        }
        let scenes = load_scenes(&config.data_dir.join("scenes"))?;
        let (table, pending) = jobs::JobTable::open(&config.data_dir.join("journal.jsonl"))?;
        let (tx, rx) = mpsc::unbounded_channel();
        let state = Arc::new(AppState {
            link_slots: Arc::new(Semaphore::new(config.link_capacity)),
            config,
            scenes: RwLock::new(scenes),
            jobs: Mutex::new(table),
            queue: tx,
            pending: Arc::new(tokio::sync::Mutex::new(rx)),
        });
        for id in pending {
            state.queue.send(id).expect("queue open");
        }
        for _ in 0..state.config.workers {
            tokio::spawn(jobs::worker(state.clone()));
        }
        Ok(Service { state })
    }

    pub fn router(&self) -> Router {
        let api = Router::new()
            .route("/api/health", get(api::health))
            .route("/api/scenes", post(api::upload_scene).get(api::list_scenes))
            .route("/api/scenes/{id}", get(api::scene_info))
            .route("/api/scenes/{id}/footprint", get(api::scene_footprint))
            .route("/api/jobs", get(api::list_jobs))
            .route("/api/jobs/coverage", post(api::submit_coverage))
            .route("/api/jobs/{id}", get(api::job_status).delete(api::cancel_job))
            .route("/api/jobs/{id}/result", get(api::job_result))
            .route("/api/link", post(api::link))
            .with_state(self.state.clone());
        let ui = match &self.state.config.ui_dir {
            Some(dir) => Router::new().nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true)),
            None => Router::new().route("/ui", get(api::ui_placeholder)).route("/ui/", get(api::ui_placeholder)),
        };
        api.merge(ui).layer(DefaultBodyLimit::max(MAX_SCENE_BYTES)).layer(CorsLayer::permissive())
    }
}

/// Bind `addr` and serve until Ctrl-C.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> Result<(), ServiceError> {
    let service = Service::open(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, service.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
