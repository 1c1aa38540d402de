use std::f64::consts::PI;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use raytwin::channel::GridSpec;
use raytwin::{fixtures, SPEED_OF_LIGHT};
use raytwin_service::{Service, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

use crate::Outcome;

async fn call(app: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap()
}

fn coverage(scene: &str, n: u32) -> String {
    let half = 5.0 * n as f64 / 2.0;
    json!({
        "scene_id": scene,
        "tx": {"pos": [-2.0, -2.0, 20.0], "power_dbm": 20.0},
        "freq_hz": 3.5e9,
        "profile": "online",
        "grid": {"xmin": -half, "ymin": -half, "xmax": half - 5.0, "ymax": half - 5.0, "step": 5.0, "height": 1.5}
    })
    .to_string()
}

struct Observed {
    statuses: Vec<String>,
    conflict_while_pending: bool,
    result: Value,
}

async fn first_run(dir: &std::path::Path) -> Result<(String, String, Observed), String> {
    let app = Service::open(ServiceConfig { workers: 1, ..ServiceConfig::new(dir) }).map_err(|e| e.to_string())?.router();
    let campus = fixtures::campus().scene.to_json();
    let (s, v) = call(&app, Method::POST, "/api/scenes", Some(campus)).await;
    if s != StatusCode::CREATED {
        return Err(format!("upload {s}: {v}"));
    }
    let scene = v["scene_id"].as_str().unwrap().to_string();
    // The first job keeps the single worker busy so the second is seen queued.
    let (_, _) = call(&app, Method::POST, "/api/jobs/coverage", Some(coverage(&scene, 10))).await;
    let (s, v) = call(&app, Method::POST, "/api/jobs/coverage", Some(coverage(&scene, 20))).await;
    if s != StatusCode::ACCEPTED {
        return Err(format!("submit {s}: {v}"));
    }
    let job = v["job_id"].as_str().unwrap().to_string();
    let mut statuses: Vec<String> = Vec::new();
    let mut conflict_while_pending = true;
    let deadline = Instant::now() + Duration::from_secs(600);
    loop {
        let (_, v) = call(&app, Method::GET, &format!("/api/jobs/{job}"), None).await;
        let st = v["status"].as_str().unwrap_or("?").to_string();
        if statuses.last() != Some(&st) {
            statuses.push(st.clone());
        }
        if st == "done" || st == "failed" || st == "cancelled" || Instant::now() > deadline {
            break;
        }
        let (s, _) = call(&app, Method::GET, &format!("/api/jobs/{job}/result"), None).await;
        conflict_while_pending &= s == StatusCode::CONFLICT;
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    let (_, result) = call(&app, Method::GET, &format!("/api/jobs/{job}/result"), None).await;
    Ok((scene, job, Observed { statuses, conflict_while_pending, result }))
}

pub fn lifecycle() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (_, job, obs) = match runtime().block_on(first_run(dir.path())) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, e),
    };
    let lifecycle_ok = obs.statuses == ["queued", "running", "done"];
    let cells = obs.result["cells"].as_array().map_or(0, |c| c.len());
    let request: Value = serde_json::from_str(&coverage("", 20)).unwrap();
    let expected = serde_json::from_value::<GridSpec>(request["grid"].clone()).unwrap().cell_count();

    // Restart on the same data directory.
    let (restored, link) = runtime().block_on(async {
        let app = Service::open(ServiceConfig::new(dir.path())).unwrap().router();
        let (s, v) = call(&app, Method::GET, &format!("/api/jobs/{job}"), None).await;
        let (rs, result) = call(&app, Method::GET, &format!("/api/jobs/{job}/result"), None).await;
        let restored = s == StatusCode::OK && v["status"] == "done" && rs == StatusCode::OK && result == obs.result;
        let (_, v) = call(&app, Method::POST, "/api/scenes", Some(fixtures::free_space().to_json())).await;
        let free = v["scene_id"].as_str().unwrap().to_string();
        let body = json!({
            "scene_id": free, "tx": {"pos": [0.0, 0.0, 0.0]}, "rx": {"pos": [100.0, 0.0, 0.0]},
            "freq_hz": 6e9, "profile": "online"
        });
        (restored, call(&app, Method::POST, "/api/link", Some(body.to_string())).await)
    });
    let (ls, lv) = link;
    let fspl = 20.0 * (4.0 * PI * 100.0 * 6e9 / SPEED_OF_LIGHT).log10();
    let mpcs = lv["mpcs"].as_array().cloned().unwrap_or_default();
    let compute_ms = lv["compute_ms"].as_f64();
    let link_ok = ls == StatusCode::OK
        && compute_ms.is_some_and(|c| c >= 0.0)
        && mpcs.len() == 1
        && mpcs[0]["power_db"].as_f64().is_some_and(|p| (p + fspl).abs() < 1e-9)
        && mpcs[0]["delay_s"].as_f64().is_some_and(|d| (d - 100.0 / SPEED_OF_LIGHT).abs() < 1e-15)
        && mpcs[0]["signature"].as_array().is_some_and(|s| s.is_empty());
    Outcome::new(
        lifecycle_ok && obs.conflict_while_pending && cells == expected && restored && link_ok,
        format!(
            "statuses {:?}, 409 before done: {}, {cells}/{expected} cells, restored after restart: {restored}, link {ls} PL {:.3} dB (FSPL {fspl:.3}), compute_ms {:?}",
            obs.statuses,
            obs.conflict_while_pending,
            mpcs.first().and_then(|m| m["power_db"].as_f64()).map_or(f64::NAN, |p| -p),
            compute_ms
        ),
    )
}
