use std::path::Path;
use std::process::{Command, Output};

fn raytwin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raytwin")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(dir: &Path, kind: &str) -> String {
    let path = dir.join(format!("{kind}.json"));
    let o = raytwin(&["fixture", kind, "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    path.to_str().unwrap().to_string()
}

#[test]
fn help_exits_zero() {
    let o = raytwin(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for cmd in ["simulate", "coverage", "calibrate", "compare", "validate-scene", "serve"] {
        assert!(stdout(&o).contains(cmd), "{cmd}");
    }
}

#[test]
fn bad_flags_exit_two() {
    assert_eq!(raytwin(&["simulate", "--bogus"]).status.code(), Some(2));
    assert_eq!(raytwin(&["simulate", "--scene", "x.json", "--tx", "1,2", "--rx", "0,0,0", "--freq", "1e9"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let scene = fixture(dir.path(), "free-space");
    let o = raytwin(&["simulate", "--scene", &scene, "--tx", "0,0,0", "--rx", "1,0,0", "--freq", "1e9", "--profile", "turbo"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_free_space_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let scene = fixture(dir.path(), "free-space");
    let a = dir.path().join("a.json");
    let o = raytwin(&[
        "simulate", "--scene", &scene, "--tx", "0,0,0", "--rx", "100,0,0", "--freq", "6G", "--out", a.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("n_paths: 1"), "{out}");
    assert!(out.contains("path_loss_db: 88.01"), "{out}");
    assert!(out.contains("rms_delay_spread_ns: 0.00"), "{out}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);

    let o = raytwin(&["compare", "--a", a.to_str().unwrap(), "--b", a.to_str().unwrap()]);
    assert!(stdout(&o).contains("similarity_index: 100.0 %"));
    let mut v2 = json.clone();
    v2["schema_version"] = serde_json::json!(99);
    let b = dir.path().join("b.json");
    std::fs::write(&b, v2.to_string()).unwrap();
    assert_eq!(raytwin(&["compare", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn simulate_without_paths_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let scene = fixture(dir.path(), "ground");
    let profile = dir.path().join("p.json");
    std::fs::write(&profile, r#"{"profile": "online", "overrides": {"max_transmissions": 0, "max_diffractions": 0}}"#).unwrap();
    // Receiver below an opaque ground plane.
    let o = raytwin(&[
        "simulate", "--scene", &scene, "--tx", "0,0,10", "--rx", "50,0,-5", "--freq", "3.5e9",
        "--profile-file", profile.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stdout(&o));
}

#[test]
fn scene_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(raytwin(&["validate-scene", "--scene", missing.to_str().unwrap()]).status.code(), Some(3));
    let empty = fixture(dir.path(), "free-space");
    assert_eq!(raytwin(&["validate-scene", "--scene", &empty]).status.code(), Some(3));
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"units\": \"m\", \"vertices\": [[0,0,0]], \"triangles\": [[0, 0, 5, 0]]}").unwrap();
    assert_eq!(raytwin(&["validate-scene", "--scene", broken.to_str().unwrap()]).status.code(), Some(3));
    let campus = fixture(dir.path(), "campus");
    let o = raytwin(&["validate-scene", "--scene", &campus]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("triangles: 102"), "{out}");
    assert!(out.contains("diffraction_edges: 80"), "{out}");
    assert!(out.contains("dropped_degenerate: 0"), "{out}");
}

#[test]
fn coverage_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let scene = fixture(dir.path(), "campus");
    let csv = dir.path().join("cov.csv");
    let o = raytwin(&[
        "coverage", "--scene", &scene, "--tx", "-2,-2,20", "--freq", "3.5e9", "--profile", "online",
        "--grid", "-50,-50,50,50,10,1.5", "--out", csv.to_str().unwrap(), "--threads", "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("covered: "));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 101);
    let o = raytwin(&["coverage", "--scene", &scene, "--tx", "0,0,1", "--freq", "1e9", "--grid", "0,0,1,1,-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calibrate_rejects_infeasible_requests() {
    let dir = tempfile::tempdir().unwrap();
    let scene = fixture(dir.path(), "campus");
    let csv = dir.path().join("m.csv");
    std::fs::write(&csv, "x_m,y_m,z_m,freq_hz,observed_db,kind,tx_power_dbm,los_class\n10,0,1.5,3.5e9,90,pl,0,\n0,10,1.5,3.5e9,91,pl,0,\n").unwrap();
    let m = csv.to_str().unwrap();
    let base = ["calibrate", "--scene", &scene, "--tx", "-2,-2,20", "--measurements", m];
    let run = |extra: &[&str]| raytwin(&[&base[..], extra].concat()).status.code();
    assert_eq!(run(&["--param", "concrete.eps_r:8..2", "--validation-count", "1"]), Some(5));
    assert_eq!(run(&["--param", "unobtainium.eps_r:2..8", "--validation-count", "1"]), Some(5));
    assert_eq!(run(&["--param", "concrete.eps_r:2..8", "--validation-count", "2"]), Some(5));
}

#[test]
fn calibrate_small_problem() {
    let dir = tempfile::tempdir().unwrap();
    let scene = fixture(dir.path(), "campus");
    let csv = dir.path().join("m.csv");
    let o = raytwin(&["fixture", "measurements", "--out", csv.to_str().unwrap(), "--noise", "0"]);
    assert!(o.status.success());
    let schedule = dir.path().join("s.json");
    std::fs::write(&schedule, r#"{"steps": 4, "moves_per_step": 3}"#).unwrap();
    let report = dir.path().join("r.json");
    let o = raytwin(&[
        "calibrate", "--scene", &scene, "--tx", "-2,-2,20", "--measurements", csv.to_str().unwrap(),
        "--param", "concrete.eps_r:2..8", "--validation-count", "20", "--schedule-file", schedule.to_str().unwrap(),
        "--out", report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("concrete.eps_r"));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["trace"].as_array().unwrap().len(), 12);
}
