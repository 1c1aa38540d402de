use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use raytwin::antenna::AntennaPattern;
use raytwin::calibrate::{self, CalibrationProblem, MeasurementPoint, ParameterSpec, SaSchedule, DEFAULT_PENALTY_DB};
use raytwin::channel::{self, mpcs_of, CoverageOptions, GridSpec, MpcFile, SimilarityGates};
use raytwin::engine::{simulate_link, EngineConfig, Endpoint};
use raytwin::fixtures;
use raytwin::materials::MaterialField;
use raytwin::profiles::{self, Overrides, ProfileFile};
use raytwin::scene::{extract_diffraction_edges, load_scene, Scene, DEFAULT_DIHEDRAL_THRESHOLD_DEG};
use raytwin::Vec3;

/// Deterministic ray-tracing radio channel simulator.
#[derive(Parser)]
#[command(name = "raytwin", version)]
struct Cli {
    /// JSON file with a profile name and field overrides.
    #[arg(long, global = true)]
    profile_file: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace one link and report its multipath components.
    Simulate(SimulateArgs),
    /// Path-loss map over a horizontal grid of receivers.
    Coverage(CoverageArgs),
    /// Fit material parameters to measurements by simulated annealing.
    Calibrate(CalibrateArgs),
    /// Similarity index between two MPC files.
    Compare(CompareArgs),
    /// Load a scene and print its statistics.
    ValidateScene(ValidateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a built-in test scene or synthetic measurements.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct LinkArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Transmitter position "x,y,z" in metres.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    tx: Vec3,
    /// Carrier frequency in Hz (suffixes k, M, G accepted, e.g. 3.5G).
    #[arg(long, value_parser = parse_freq)]
    freq: f64,
    /// Preset name: offline, online or custom.
    #[arg(long)]
    profile: Option<String>,
    /// Scene time in seconds.
    #[arg(long, default_value_t = 0.0)]
    time: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Transmit antenna: isotropic, dipole or a pattern file.
    #[arg(long, default_value = "isotropic")]
    tx_antenna: String,
    /// Receive antenna: isotropic, dipole or a pattern file.
    #[arg(long, default_value = "isotropic")]
    rx_antenna: String,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    link: LinkArgs,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    rx: Vec3,
    /// MPC JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    link: LinkArgs,
    /// "xmin,ymin,xmax,ymax,step,height" in metres.
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    grid: GridSpec,
    #[arg(long, default_value_t = 0.0)]
    tx_power_dbm: f64,
    /// CSV output path.
    #[arg(long, default_value = "coverage.csv")]
    out: PathBuf,
    /// Also write the grid as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    tx: Vec3,
    #[arg(long)]
    measurements: PathBuf,
    /// "material.field:lo..hi"; repeatable.
    #[arg(long = "param", required = true)]
    params: Vec<String>,
    #[arg(long, default_value_t = 30)]
    validation_count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON annealing schedule (t0, cooling, steps, moves_per_step, step_scale).
    #[arg(long)]
    schedule_file: Option<PathBuf>,
    #[arg(long, default_value = "isotropic")]
    tx_antenna: String,
    #[arg(long, default_value = "isotropic")]
    rx_antenna: String,
    /// Report JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the calibrated material library here.
    #[arg(long)]
    materials_out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    delay_gate: f64,
    #[arg(long, default_value_t = 10.0)]
    angle_gate: f64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    scene: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    host: String,
    #[arg(long, env = "MART_DATA_DIR", default_value = "raytwin-data")]
    data_dir: PathBuf,
    /// Directory with a built planner UI to serve at /ui.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    Campus,
    V2v,
    FreeSpace,
    Ground,
    KnifeEdge,
    /// Synthetic path-loss measurements on the campus (concrete eps_r 5).
    Measurements,
}

#[derive(Args)]
struct FixtureArgs {
    kind: FixtureKind,
    #[arg(long)]
    out: PathBuf,
    /// Measurement noise in dB.
    #[arg(long, default_value_t = 2.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure with its exit code.
struct Fail(u8, String);

const EXIT_USAGE: u8 = 2;
const EXIT_SCENE: u8 = 3;
const EXIT_NO_COVERAGE: u8 = 4;
const EXIT_CALIBRATION: u8 = 5;

fn parse_point(s: &str) -> Result<Vec3, String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vec3::new(x, y, z)),
        _ => Err(format!("expected \"x,y,z\", got {s:?}")),
    }
}

fn parse_freq(s: &str) -> Result<f64, String> {
    let t = s.trim().trim_end_matches("Hz").trim_end_matches("hz");
    let (num, scale) = match t.char_indices().last() {
        Some((i, 'k' | 'K')) => (&t[..i], 1e3),
        Some((i, 'M')) => (&t[..i], 1e6),
        Some((i, 'G' | 'g')) => (&t[..i], 1e9),
        _ => (t, 1.0),
    };
    let f = num.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"))? * scale;
    (f > 0.0 && f.is_finite()).then_some(f).ok_or_else(|| format!("frequency must be positive, got {s:?}"))
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    GridSpec::parse(s).map_err(|e| e.to_string())
}

fn scene(path: &Path) -> Result<Scene, Fail> {
    load_scene(path).map_err(|e| Fail(EXIT_SCENE, e.to_string()))
}

fn antenna(spec: &str) -> Result<AntennaPattern, Fail> {
    AntennaPattern::from_spec(spec).map_err(|e| Fail(EXIT_USAGE, format!("antenna {spec:?}: {e}")))
}

fn engine(cli: &Cli, profile: Option<&str>, default: &str, seed: Option<u64>) -> Result<EngineConfig, Fail> {
    let mut cfg = match &cli.profile_file {
        Some(path) => {
            let file = ProfileFile::load(path).map_err(|e| Fail(EXIT_USAGE, e.to_string()))?;
            if profile.is_some_and(|p| p != file.profile) {
                return Err(Fail(EXIT_USAGE, format!("--profile conflicts with {} in the profile file", file.profile)));
            }
            file.resolve()
        }
        None => profiles::resolve(profile.unwrap_or(default), &Overrides::default()),
    }
    .map_err(|e| Fail(EXIT_USAGE, e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<(), Fail> {
    std::fs::write(path, text).map_err(|e| Fail(1, format!("{}: {e}", path.display())))
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<(), Fail> {
    let cfg = engine(cli, a.link.profile.as_deref(), "online", a.link.seed)?;
    let scene = scene(&a.link.scene)?;
    let tx = Endpoint::new(a.link.tx, antenna(&a.link.tx_antenna)?);
    let rx = Endpoint::new(a.rx, antenna(&a.link.rx_antenna)?);
    let r = simulate_link(&scene, &tx, &rx, a.link.freq, &cfg, a.link.time).map_err(|e| Fail(EXIT_USAGE, e.to_string()))?;
    let file = MpcFile::from_realization(&r);
    if let Some(out) = &a.out {
        write_text(out, &file.to_json())?;
    }
    let mpcs = mpcs_of(&r);
    println!("n_paths: {}", mpcs.len());
    let Some(pl) = channel::path_loss(&mpcs) else {
        return Err(Fail(EXIT_NO_COVERAGE, "no propagation path between tx and rx".into()));
    };
    println!("path_loss_db: {pl:.2}");
    println!("rms_delay_spread_ns: {:.2}", channel::rms_delay_spread(&mpcs) * 1e9);
    Ok(())
}

fn coverage(cli: &Cli, a: &CoverageArgs) -> Result<(), Fail> {
    let cfg = engine(cli, a.link.profile.as_deref(), "offline", a.link.seed)?;
    let scene = scene(&a.link.scene)?;
    let tx = Endpoint::new(a.link.tx, antenna(&a.link.tx_antenna)?);
    let rx_ant = antenna(&a.link.rx_antenna)?;
    let verbose = cli.verbose;
    let progress = move |p: f64| {
        if verbose {
            eprintln!("progress {:.0} %", 100.0 * p);
        }
    };
    let opts = CoverageOptions {
        time_s: a.link.time,
        tx_power_dbm: a.tx_power_dbm,
        batch_size: a.grid.cell_count().div_ceil(10).max(256),
        progress: Some(&progress),
        ..CoverageOptions::default()
    };
    let grid =
        channel::coverage(&scene, &tx, &rx_ant, &a.grid, a.link.freq, &cfg, &opts).map_err(|e| Fail(EXIT_USAGE, e.to_string()))?;
    let file = File::create(&a.out).map_err(|e| Fail(1, format!("{}: {e}", a.out.display())))?;
    grid.write_csv(BufWriter::new(file)).map_err(|e| Fail(1, e.to_string()))?;
    if let Some(path) = &a.json {
        write_text(path, &grid.to_json())?;
    }
    let covered = grid.cells.iter().filter(|c| !c.masked).count();
    println!("covered: {:.1} % ({covered}/{} cells)", 100.0 * grid.covered_fraction(), grid.cells.len());
    if covered == 0 {
        return Err(Fail(EXIT_NO_COVERAGE, "no grid cell received any path".into()));
    }
    Ok(())
}

fn calibrate(cli: &Cli, a: &CalibrateArgs) -> Result<(), Fail> {
    let scene = scene(&a.scene)?;
    let points: Vec<MeasurementPoint> =
        calibrate::load_measurements(&a.measurements).map_err(|e| Fail(EXIT_USAGE, e.to_string()))?;
    let params = a
        .params
        .iter()
        .map(|s| ParameterSpec::parse(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Fail(EXIT_CALIBRATION, e.to_string()))?;
    for p in &params {
        p.check(&scene.materials).map_err(|e| Fail(EXIT_CALIBRATION, e.to_string()))?;
    }
    let schedule = match &a.schedule_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Fail(EXIT_USAGE, format!("{}: {e}", path.display())))?;
            serde_json::from_str::<SaSchedule>(&text).map_err(|e| Fail(EXIT_USAGE, format!("schedule: {e}")))?
        }
        None => SaSchedule::default(),
    };
    let schedule = SaSchedule { seed: a.seed, ..schedule };
    let (train, validation) =
        calibrate::split_points(&points, a.validation_count, a.seed).map_err(|e| Fail(EXIT_CALIBRATION, e.to_string()))?;
    let cfg = match &cli.profile_file {
        Some(_) => engine(cli, None, "offline", None)?,
        None => profiles::calibration_engine(),
    };
    let (n_train, n_validation) = (train.len(), validation.len());
    let problem = CalibrationProblem {
        tx: Endpoint::new(a.tx, antenna(&a.tx_antenna)?),
        rx_antenna: antenna(&a.rx_antenna)?,
        scene,
        train,
        validation,
        params,
        cfg,
        penalty_db: DEFAULT_PENALTY_DB,
    };
    let result = calibrate::simulated_annealing(&problem, &schedule).map_err(|e| match e {
        calibrate::CalibrateError::Bounds(_) => Fail(EXIT_CALIBRATION, e.to_string()),
        other => Fail(EXIT_USAGE, other.to_string()),
    })?;
    let report = calibrate::report(&result, &schedule, n_train, n_validation);
    print!("{}", report.table());
    if let Some(out) = &a.out {
        write_text(out, &report.to_json())?;
    }
    if let Some(out) = &a.materials_out {
        let lib = calibrate::apply_params(&problem.scene.materials, &problem.params, &result.best_values());
        write_text(out, &lib.to_json())?;
    }
    Ok(())
}

fn compare(a: &CompareArgs) -> Result<(), Fail> {
    let load = |p: &Path| MpcFile::load(p).map_err(|e| Fail(EXIT_SCENE, format!("{}: {e}", p.display())));
    let (fa, fb) = (load(&a.a)?, load(&a.b)?);
    if !(a.delay_gate >= 0.0 && a.angle_gate >= 0.0) {
        return Err(Fail(EXIT_USAGE, "gates must be non-negative".into()));
    }
    let gates = SimilarityGates { delay_gate_s: a.delay_gate * 1e-9, angle_gate_deg: a.angle_gate };
    println!("similarity_index: {:.1} %", channel::similarity_index(&fa.mpcs, &fb.mpcs, &gates));
    Ok(())
}

fn validate_scene(a: &ValidateArgs) -> Result<(), Fail> {
    let s = scene(&a.scene)?;
    if s.triangle_count() == 0 && s.dynamic_objects.is_empty() {
        return Err(Fail(EXIT_SCENE, "scene has no triangles".into()));
    }
    let edges = extract_diffraction_edges(&s, DEFAULT_DIHEDRAL_THRESHOLD_DEG);
    println!("triangles: {}", s.triangle_count());
    println!("dropped_degenerate: {}", s.dropped_degenerate);
    println!("dynamic_objects: {}", s.dynamic_objects.len());
    println!("diffraction_edges: {}", edges.len());
    println!("materials: {}", s.materials.materials().iter().map(|m| m.name.as_str()).collect::<Vec<_>>().join(", "));
    let (lo, hi) = (s.bounds.min, s.bounds.max);
    println!("bounds: [{:.3}, {:.3}, {:.3}] .. [{:.3}, {:.3}, {:.3}]", lo.x, lo.y, lo.z, hi.x, hi.y, hi.z);
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<(), Fail> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().map_err(|e| Fail(EXIT_USAGE, format!("address: {e}")))?;
    let config = raytwin_service::ServiceConfig {
        workers: a.workers,
        ui_dir: a.ui_dir.clone(),
        ..raytwin_service::ServiceConfig::new(&a.data_dir)
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Fail(1, e.to_string()))?;
    eprintln!("serving on http://{addr} (data in {})", a.data_dir.display());
    rt.block_on(raytwin_service::serve(config, addr)).map_err(|e| Fail(1, e.to_string()))
}

fn fixture(a: &FixtureArgs) -> Result<(), Fail> {
    let text = match a.kind {
        FixtureKind::Campus => fixtures::campus().scene.to_json(),
        FixtureKind::V2v => fixtures::v2v_scene().to_json(),
        FixtureKind::FreeSpace => fixtures::free_space().to_json(),
        FixtureKind::Ground => {
            let lib = raytwin::materials::MaterialLibrary::builtin();
            fixtures::ground_plane(1000.0, lib.id_of("ground").expect("ground")).to_json()
        }
        FixtureKind::KnifeEdge => fixtures::knife_edge(10.0, 100.0, 2.0).to_json(),
        FixtureKind::Measurements => {
            let mut lib = raytwin::materials::MaterialLibrary::builtin();
            lib.set_field("concrete", MaterialField::EpsR, 5.0).expect("concrete");
            let campus = fixtures::campus_with(lib);
            let positions: Vec<Vec3> = (0..119)
                .map(|k| Vec3::new(-52.0 + 104.0 * ((k % 17) as f64 + 0.5) / 17.0, -52.0 + 104.0 * ((k / 17) as f64 + 0.5) / 7.0, 1.5))
                .filter(|p| !campus.buildings.iter().any(|b| p.x > b.min.x && p.x < b.max.x && p.y > b.min.y && p.y < b.max.y))
                .collect();
            let tx = Endpoint::isotropic(campus.tx);
            let pts = calibrate::synthetic_measurements(
                &campus.scene,
                &tx,
                &AntennaPattern::isotropic(),
                &positions,
                3.5e9,
                &profiles::calibration_engine(),
                a.noise,
                a.seed,
            )
            .map_err(|e| Fail(1, e.to_string()))?;
            let mut buf = Vec::new();
            calibrate::write_measurements(&pts, &mut buf).map_err(|e| Fail(1, e.to_string()))?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
    };
    write_text(&a.out, &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn }).init();
    if let Some(n) = cli.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: --threads must be a positive integer");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate(&cli, a),
        Command::Coverage(a) => coverage(&cli, a),
        Command::Calibrate(a) => calibrate(&cli, a),
        Command::Compare(a) => compare(a),
        Command::ValidateScene(a) => validate_scene(a),
        Command::Serve(a) => serve(a),
        Command::Fixture(a) => fixture(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
