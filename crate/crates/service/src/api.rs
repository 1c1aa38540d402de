use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::Json;
use raytwin::antenna::AntennaPattern;
use raytwin::channel::{mpcs_of, path_loss, rms_delay_spread, GridSpec, MpcFile};
use raytwin::engine::{simulate_link, EngineConfig, Endpoint};
use raytwin::geometry::Vec3;
use raytwin::profiles::{self, Overrides, ProfileError};
use raytwin::scene::Scene;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uuid::Uuid;

use crate::jobs::{self, JobRecord, JobStatus};
use crate::{footprint, now_unix_ms, AppState, StoredScene, API_SCHEMA_VERSION};

pub(crate) struct ApiError(StatusCode, String);

impl ApiError {
    fn bad(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, msg.into())
    }

    fn not_found(what: &str, id: Uuid) -> Self {
        ApiError(StatusCode::NOT_FOUND, format!("no {what} {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "schema_version": API_SCHEMA_VERSION, "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad(format!("invalid request: {e}")))
}

/// Antenna by name; pattern files are not read on the server.
pub(crate) fn antenna(name: Option<&str>) -> Result<AntennaPattern, String> {
    match name.unwrap_or("isotropic") {
        n @ ("isotropic" | "iso" | "dipole" | "vertical_dipole" | "omni") => {
            Ok(AntennaPattern::from_spec(n).expect("named antenna"))
        }
        other => Err(format!("unknown antenna {other:?}; use isotropic or dipole")),
    }
}

fn default_offline() -> String {
    "offline".into()
}

fn default_online() -> String {
    "online".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxSpec {
    pub pos: Vec3,
    #[serde(default)]
    pub power_dbm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antenna: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageRequest {
    pub scene_id: Uuid,
    pub tx: TxSpec,
    pub freq_hz: f64,
    #[serde(default = "default_offline")]
    pub profile: String,
    #[serde(default)]
    pub overrides: Overrides,
    pub grid: GridSpec,
    #[serde(default)]
    pub time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx_antenna: Option<String>,
}

impl CoverageRequest {
    pub fn engine(&self) -> Result<EngineConfig, ProfileError> {
        profiles::resolve(&self.profile, &self.overrides)
    }
}

/// Fixed position, or an offset on a dynamic object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSpec {
    #[serde(default)]
    pub pos: Option<Vec3>,
    #[serde(default)]
    pub object: Option<usize>,
    #[serde(default)]
    pub offset: Option<Vec3>,
    #[serde(default)]
    pub antenna: Option<String>,
}

impl EndpointSpec {
    fn endpoint(&self) -> Result<Endpoint, String> {
        let ant = antenna(self.antenna.as_deref())?;
        match (self.object, self.pos, self.offset) {
            (Some(obj), None, offset) => Ok(Endpoint::attached(obj, offset.unwrap_or(Vec3::ZERO), ant)),
            (None, Some(p), None) => Ok(Endpoint::new(p, ant)),
            _ => Err("endpoint needs either pos, or object with an optional offset".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRequest {
    pub scene_id: Uuid,
    pub tx: EndpointSpec,
    pub rx: EndpointSpec,
    pub freq_hz: f64,
    #[serde(default = "default_online")]
    pub profile: String,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkResponse {
    #[serde(flatten)]
    pub channel: MpcFile,
    pub profile: String,
    pub n_paths: usize,
    pub path_loss_db: Option<f64>,
    pub rms_delay_spread_ns: f64,
    pub compute_ms: f64,
}

fn scene_of(state: &AppState, id: Uuid) -> ApiResult<Arc<Scene>> {
    state.scenes.read().expect("scene lock").get(&id).map(|s| s.scene.clone()).ok_or_else(|| ApiError::not_found("scene", id))
}

fn scene_summary(id: Uuid, s: &StoredScene) -> Value {
    json!({
        "scene_id": id,
        "triangle_count": s.scene.triangle_count(),
        "dynamic_objects": s.scene.dynamic_objects.len(),
        "dropped_degenerate": s.scene.dropped_degenerate,
        "bounds": s.scene.bounds,
        "created_unix_ms": s.created_unix_ms,
    })
}

fn check_freq(f: f64) -> ApiResult<()> {
    (f > 0.0 && f.is_finite()).then_some(()).ok_or_else(|| ApiError::bad(format!("freq_hz must be positive, got {f}")))
}

pub(crate) async fn health() -> Json<Value> {
    Json(json!({ "schema_version": API_SCHEMA_VERSION, "status": "ok" }))
}

pub(crate) async fn upload_scene(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad("scene must be UTF-8 JSON"))?;
    let scene = Scene::from_json(text).map_err(|e| ApiError::bad(format!("invalid scene: {e}")))?;
    let id = Uuid::new_v4();
    let path = state.scene_dir().join(format!("{id}.json"));
    std::fs::write(&path, text).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("storing scene: {e}")))?;
    let stored = StoredScene { scene: Arc::new(scene), created_unix_ms: now_unix_ms() };
    let mut summary = scene_summary(id, &stored);
    summary["schema_version"] = json!(API_SCHEMA_VERSION);
    state.scenes.write().expect("scene lock").insert(id, stored);
    Ok((StatusCode::CREATED, Json(summary)))
}

pub(crate) async fn list_scenes(State(state): State<Arc<AppState>>) -> Json<Value> {
    let scenes = state.scenes.read().expect("scene lock");
    let mut list: Vec<(u64, Uuid, Value)> = scenes.iter().map(|(id, s)| (s.created_unix_ms, *id, scene_summary(*id, s))).collect();
    list.sort_by_key(|(t, id, _)| (*t, *id));
    Json(json!({ "schema_version": API_SCHEMA_VERSION, "scenes": list.into_iter().map(|x| x.2).collect::<Vec<_>>() }))
}

pub(crate) async fn scene_info(State(state): State<Arc<AppState>>, Path(id): Path<Uuid>) -> ApiResult<Json<Value>> {
    let scenes = state.scenes.read().expect("scene lock");
    let s = scenes.get(&id).ok_or_else(|| ApiError::not_found("scene", id))?;
    let mut v = scene_summary(id, s);
    v["schema_version"] = json!(API_SCHEMA_VERSION);
    Ok(Json(v))
}

pub(crate) async fn scene_footprint(
    State(state): State<Arc<AppState>>,
    Path(id): Path<Uuid>,
) -> ApiResult<Json<footprint::Footprint>> {
    let scene = scene_of(&state, id)?;
    Ok(Json(footprint::footprint(&scene)))
}

pub(crate) async fn submit_coverage(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let req: CoverageRequest = parse(&body)?;
    check_freq(req.freq_hz)?;
    req.grid.validate().map_err(|e| ApiError::bad(e.to_string()))?;
    req.engine().map_err(|e| ApiError::bad(e.to_string()))?;
    if !req.tx.pos.is_finite() || !req.tx.power_dbm.is_finite() {
        return Err(ApiError::bad("tx position and power must be finite"));
    }
    antenna(req.tx.antenna.as_deref()).map_err(ApiError::bad)?;
    antenna(req.rx_antenna.as_deref()).map_err(ApiError::bad)?;
    scene_of(&state, req.scene_id)?;
    let record = JobRecord::new(req);
    let id = record.job_id;
    state.jobs.lock().expect("job lock").insert(record.clone());
    state.queue.send(id).map_err(|_| ApiError(StatusCode::SERVICE_UNAVAILABLE, "job queue closed".into()))?;
    Ok((StatusCode::ACCEPTED, Json(record)))
}

pub(crate) async fn list_jobs(State(state): State<Arc<AppState>>) -> Json<Value> {
    let t = state.jobs.lock().expect("job lock");
    let mut jobs: Vec<&JobRecord> = t.records.values().collect();
    jobs.sort_by_key(|r| (r.created_unix_ms, r.job_id));
    Json(json!({ "schema_version": API_SCHEMA_VERSION, "jobs": jobs }))
}

pub(crate) async fn job_status(State(state): State<Arc<AppState>>, Path(id): Path<Uuid>) -> ApiResult<Json<JobRecord>> {
    let t = state.jobs.lock().expect("job lock");
    t.records.get(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found("job", id))
}

pub(crate) async fn cancel_job(State(state): State<Arc<AppState>>, Path(id): Path<Uuid>) -> ApiResult<Json<JobRecord>> {
    jobs::cancel(&state, id).map(Json).ok_or_else(|| ApiError::not_found("job", id))
}

pub(crate) async fn job_result(State(state): State<Arc<AppState>>, Path(id): Path<Uuid>) -> ApiResult<Response> {
    let status = {
        let t = state.jobs.lock().expect("job lock");
        t.records.get(&id).map(|r| r.status).ok_or_else(|| ApiError::not_found("job", id))?
    };
    if status != JobStatus::Done {
        let name = serde_json::to_value(status).expect("status serializes");
        return Err(ApiError(StatusCode::CONFLICT, format!("job is {}, result not available", name.as_str().unwrap_or("?"))));
    }
    let text = tokio::fs::read_to_string(state.result_path(id))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("reading result: {e}")))?;
    Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], text).into_response())
}

pub(crate) async fn link(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<LinkResponse>> {
    let req: LinkRequest = parse(&body)?;
    check_freq(req.freq_hz)?;
    let cfg = profiles::resolve(&req.profile, &req.overrides).map_err(|e| ApiError::bad(e.to_string()))?;
    let (tx, rx) = (req.tx.endpoint().map_err(ApiError::bad)?, req.rx.endpoint().map_err(ApiError::bad)?);
    let scene = scene_of(&state, req.scene_id)?;
    let permit = state
        .link_slots
        .clone()
        .try_acquire_owned()
        .map_err(|_| ApiError(StatusCode::SERVICE_UNAVAILABLE, "link capacity exhausted, retry later".into()))?;
    let profile = req.profile.clone();
    let t0 = Instant::now();
    let r = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        simulate_link(&scene, &tx, &rx, req.freq_hz, &cfg, req.time_s)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError::bad(e.to_string()))?;
    let compute_ms = t0.elapsed().as_secs_f64() * 1e3;
    let mpcs = mpcs_of(&r);
    Ok(Json(LinkResponse {
        n_paths: mpcs.len(),
        path_loss_db: path_loss(&mpcs),
        rms_delay_spread_ns: rms_delay_spread(&mpcs) * 1e9,
        channel: MpcFile::from_realization(&r),
        profile,
        compute_ms,
    }))
}

pub(crate) async fn ui_placeholder() -> Html<&'static str> {
    Html(include_str!("ui_placeholder.html"))
}
