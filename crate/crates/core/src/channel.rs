//! Channel twin: MPC records, link metrics, band-limited CIR, similarity
//! index and coverage grids.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::antenna::AntennaPattern;
use crate::engine::{
    evaluate_link, link_geometries, scatter_mask, ChannelRealization, EngineConfig, EngineError, Endpoint, InteractionKind,
    PreparedScene,
};
use crate::geometry::Vec3;
use crate::scene::Scene;

pub const MPC_SCHEMA_VERSION: u32 = 1;
pub const COVERAGE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("cancelled")]
    Cancelled,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed MPC file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema_version {0}")]
    Schema(u32),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One signature element as written to MPC files: `["R", 12]`, or
/// `["S", triangle, tile]` for scattering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigEntry {
    Surface(String, u32),
    Tile(String, u32, u32),
}

/// Multipath component record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mpc {
    pub delay_s: f64,
    /// Path gain in dB; equal to received power in dBm for a 0 dBm transmitter.
    pub power_db: f64,
    pub phase_rad: f64,
    pub aod_az_deg: f64,
    pub aod_el_deg: f64,
    pub aoa_az_deg: f64,
    pub aoa_el_deg: f64,
    pub doppler_hz: f64,
    pub signature: Vec<SigEntry>,
}

impl Mpc {
    pub fn power(&self) -> f64 {
        10f64.powf(self.power_db / 10.0)
    }

    pub fn amplitude(&self) -> Complex64 {
        Complex64::from_polar(10f64.powf(self.power_db / 20.0), self.phase_rad)
    }
}

pub fn mpcs_of(r: &ChannelRealization) -> Vec<Mpc> {
    r.paths
        .iter()
        .map(|p| Mpc {
            delay_s: p.delay_s,
            power_db: p.power_db(),
            phase_rad: p.amplitude.arg(),
            aod_az_deg: p.aod.0,
            aod_el_deg: p.aod.1,
            aoa_az_deg: p.aoa.0,
            aoa_el_deg: p.aoa.1,
            doppler_hz: p.doppler_hz,
            signature: p
                .interactions
                .iter()
                .map(|i| match i.kind {
                    InteractionKind::Scattering => SigEntry::Tile(i.kind.code().into(), i.surface_id, i.sub),
                    k => SigEntry::Surface(k.code().into(), i.surface_id),
                })
                .collect(),
        })
        .collect()
}

/// MPC output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcFile {
    pub schema_version: u32,
    pub freq_hz: f64,
    pub time_s: f64,
    pub tx: [f64; 3],
    pub rx: [f64; 3],
    pub mpcs: Vec<Mpc>,
}

impl MpcFile {
    pub fn from_realization(r: &ChannelRealization) -> Self {
        MpcFile {
            schema_version: MPC_SCHEMA_VERSION,
            freq_hz: r.freq_hz,
            time_s: r.time_s,
            tx: r.tx.to_array(),
            rx: r.rx.to_array(),
            mpcs: mpcs_of(r),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("MPC file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ChannelError> {
        let f: MpcFile = serde_json::from_str(text)?;
        if f.schema_version != MPC_SCHEMA_VERSION {
            return Err(ChannelError::Schema(f.schema_version));
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self, ChannelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `-10 log10(sum |a|^2)`: power sum over paths. `None` means no coverage.
pub fn path_loss(mpcs: &[Mpc]) -> Option<f64> {
    if mpcs.is_empty() {
        return None;
    }
    Some(-10.0 * mpcs.iter().map(Mpc::power).sum::<f64>().log10())
}

/// `-10 log10(|sum a|^2)`: narrowband phasor sum.
pub fn path_loss_coherent(mpcs: &[Mpc]) -> Option<f64> {
    if mpcs.is_empty() {
        return None;
    }
    Some(-10.0 * mpcs.iter().map(Mpc::amplitude).sum::<Complex64>().norm_sqr().log10())
}

pub fn rsrp(mpcs: &[Mpc], tx_power_dbm: f64) -> Option<f64> {
    path_loss(mpcs).map(|pl| tx_power_dbm - pl)
}

/// Power-weighted RMS delay spread, seconds.
pub fn rms_delay_spread(mpcs: &[Mpc]) -> f64 {
    let total: f64 = mpcs.iter().map(Mpc::power).sum();
    if mpcs.len() < 2 || total <= 0.0 {
        return 0.0;
    }
    let t0 = mpcs.iter().map(|m| m.delay_s).fold(f64::INFINITY, f64::min);
    let mean = mpcs.iter().map(|m| m.power() * (m.delay_s - t0)).sum::<f64>() / total;
    let var = mpcs.iter().map(|m| m.power() * (m.delay_s - t0 - mean).powi(2)).sum::<f64>() / total;
    var.max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Departure,
    Arrival,
}

/// Circular azimuth spread `sqrt(2 (1 - R))` in degrees, with `R` the
/// power-weighted mean resultant length.
pub fn angular_spread(mpcs: &[Mpc], side: Side) -> f64 {
    let total: f64 = mpcs.iter().map(Mpc::power).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let sum: Complex64 = mpcs
        .iter()
        .map(|m| {
            let az = match side {
                Side::Departure => m.aod_az_deg,
                Side::Arrival => m.aoa_az_deg,
            };
            Complex64::from_polar(m.power(), az.to_radians())
        })
        .sum();
    let r = (sum.norm() / total).min(1.0);
    (2.0 * (1.0 - r)).sqrt().to_degrees()
}

/// Band-limited channel impulse response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cir {
    pub tap_spacing: f64,
    /// Delay of tap 0, seconds.
    pub reference_delay: f64,
    pub taps: Vec<Complex64>,
}

impl Cir {
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }
}

/// Taps kept on each side of the path span.
pub const CIR_GUARD_TAPS: i64 = 256;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Ideal low-pass CIR sampled at `1/bandwidth`.
pub fn synthesize_cir(mpcs: &[Mpc], bandwidth: f64) -> Cir {
    let ts = 1.0 / bandwidth;
    if mpcs.is_empty() {
        return Cir { tap_spacing: ts, reference_delay: 0.0, taps: Vec::new() };
    }
    let lo = mpcs.iter().map(|m| m.delay_s).fold(f64::INFINITY, f64::min);
    let hi = mpcs.iter().map(|m| m.delay_s).fold(f64::NEG_INFINITY, f64::max);
    let first = (lo / ts).floor() as i64 - CIR_GUARD_TAPS;
    let last = (hi / ts).ceil() as i64 + CIR_GUARD_TAPS;
    let taps = (first..=last)
        .map(|n| mpcs.iter().map(|m| m.amplitude() * sinc(n as f64 - m.delay_s / ts)).sum())
        .collect();
    Cir { tap_spacing: ts, reference_delay: first as f64 * ts, taps }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGates {
    pub delay_gate_s: f64,
    pub angle_gate_deg: f64,
}

impl Default for SimilarityGates {
    fn default() -> Self {
        SimilarityGates { delay_gate_s: 10e-9, angle_gate_deg: 10.0 }
    }
}

fn aoa_separation_deg(a: &Mpc, b: &Mpc) -> f64 {
    let u = Vec3::from_az_el_deg(a.aoa_az_deg, a.aoa_el_deg);
    let v = Vec3::from_az_el_deg(b.aoa_az_deg, b.aoa_el_deg);
    u.dot(v).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Similarity index in percent: greedy one-to-one matching of paths whose
/// delays and arrival directions fall within the gates, strongest common
/// power first; `100 * sum min(P_a, P_b) / max(sum P_a, sum P_b)`.
pub fn similarity_index(a: &[Mpc], b: &[Mpc], g: &SimilarityGates) -> f64 {
    let (ta, tb): (f64, f64) = (a.iter().map(Mpc::power).sum(), b.iter().map(Mpc::power).sum());
    let denom = ta.max(tb);
    if denom <= 0.0 {
        return if a.is_empty() && b.is_empty() { 100.0 } else { 0.0 };
    }
    let mut pairs = Vec::new();
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            let dt = (x.delay_s - y.delay_s).abs();
            if dt <= g.delay_gate_s && aoa_separation_deg(x, y) <= g.angle_gate_deg {
                let (p, q) = (x.power(), y.power());
                pairs.push((p.min(q), p.max(q), dt, i, j));
            }
        }
    }
    pairs.sort_by(|u, v| v.0.total_cmp(&u.0).then(v.1.total_cmp(&u.1)).then(u.2.total_cmp(&v.2)));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut matched = 0.0;
    for (m, _, _, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            matched += m;
        }
    }
    (100.0 * matched / denom).clamp(0.0, 100.0)
}

/// Rectangular coverage lattice, cells centred at `min + (i + 0.5) step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
    pub step: f64,
    #[serde(default = "default_height")]
    pub height: f64,
}

fn default_height() -> f64 {
    1.5
}

impl GridSpec {
    /// Parse `xmin,ymin,xmax,ymax,step[,height]`.
    pub fn parse(s: &str) -> Result<Self, ChannelError> {
        let v: Vec<f64> = s
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ChannelError::Grid(format!("{s:?}: {e}")))?;
        if v.len() != 5 && v.len() != 6 {
            return Err(ChannelError::Grid("expected xmin,ymin,xmax,ymax,step[,height]".into()));
        }
        let g = GridSpec { xmin: v[0], ymin: v[1], xmax: v[2], ymax: v[3], step: v[4], height: v.get(5).copied().unwrap_or(1.5) };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let vals = [self.xmin, self.ymin, self.xmax, self.ymax, self.step, self.height];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(ChannelError::Grid("values must be finite".into()));
        }
        if !(self.step > 0.0) {
            return Err(ChannelError::Grid("step must be positive".into()));
        }
        if !(self.xmax > self.xmin && self.ymax > self.ymin) {
            return Err(ChannelError::Grid("max must exceed min".into()));
        }
        if self.cell_count() > 4_000_000 {
            return Err(ChannelError::Grid("more than 4e6 cells".into()));
        }
        Ok(())
    }

    fn count(span: f64, step: f64) -> usize {
        ((span / step) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn n_x(&self) -> usize {
        Self::count(self.xmax - self.xmin, self.step)
    }

    pub fn n_y(&self) -> usize {
        Self::count(self.ymax - self.ymin, self.step)
    }

    pub fn cell_count(&self) -> usize {
        self.n_x() * self.n_y()
    }

    /// Cell centres in row-major order (x fastest).
    pub fn centers(&self) -> Vec<Vec3> {
        let (nx, ny) = (self.n_x(), self.n_y());
        let mut out = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                out.push(Vec3::new(
                    self.xmin + (i as f64 + 0.5) * self.step,
                    self.ymin + (j as f64 + 0.5) * self.step,
                    self.height,
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub pl_db: Option<f64>,
    pub rsrp_dbm: Option<f64>,
    pub ds_ns: Option<f64>,
    pub n_paths: usize,
    pub masked: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageGrid {
    pub schema_version: u32,
    pub origin: [f64; 3],
    pub x_step: f64,
    pub y_step: f64,
    pub height: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub freq_hz: f64,
    pub tx: [f64; 3],
    pub tx_power_dbm: f64,
    pub cells: Vec<CoverageCell>,
}

impl CoverageGrid {
    pub fn covered_fraction(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.cells.iter().filter(|c| !c.masked).count() as f64 / self.cells.len() as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ChannelError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x_m", "y_m", "z_m", "pl_db", "rsrp_dbm", "ds_ns", "n_paths", "masked"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            out.write_record([
                c.x_m.to_string(),
                c.y_m.to_string(),
                c.z_m.to_string(),
                opt(c.pl_db),
                opt(c.rsrp_dbm),
                opt(c.ds_ns),
                c.n_paths.to_string(),
                (c.masked as u8).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("grid serializes")
    }
}

pub struct CoverageOptions<'a> {
    pub time_s: f64,
    pub tx_power_dbm: f64,
    /// Run on a single worker thread instead of the global pool.
    pub sequential: bool,
    /// Cells traced per ray-tree pass; progress is reported between passes.
    pub batch_size: usize,
    pub progress: Option<&'a (dyn Fn(f64) + Sync)>,
    pub cancel: Option<&'a AtomicBool>,
}

impl Default for CoverageOptions<'_> {
    fn default() -> Self {
        CoverageOptions { time_s: 0.0, tx_power_dbm: 0.0, sequential: false, batch_size: usize::MAX, progress: None, cancel: None }
    }
}

/// Whether `p` lies inside closed geometry: the first surface straight
/// above it is seen from its back side.
pub fn inside_geometry(prep: &PreparedScene, p: Vec3) -> bool {
    match prep.bvh.intersect(p, Vec3::Z, 0.0, f64::INFINITY) {
        Some(h) => prep.bvh.triangle(h.triangle_id).normal.dot(Vec3::Z) > 0.0,
        None => false,
    }
}

fn masked_cell(p: Vec3, note: &str) -> CoverageCell {
    CoverageCell { x_m: p.x, y_m: p.y, z_m: p.z, pl_db: None, rsrp_dbm: None, ds_ns: None, n_paths: 0, masked: true, note: Some(note.into()) }
}

/// Coverage over a grid of receivers with one transmitter.
pub fn coverage(
    scene: &Scene,
    tx: &Endpoint,
    rx_antenna: &AntennaPattern,
    grid: &GridSpec,
    f: f64,
    cfg: &EngineConfig,
    opts: &CoverageOptions,
) -> Result<CoverageGrid, ChannelError> {
    if opts.sequential {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool");
        pool.install(|| coverage_inner(scene, tx, rx_antenna, grid, f, cfg, opts))
    } else {
        coverage_inner(scene, tx, rx_antenna, grid, f, cfg, opts)
    }
}

fn coverage_inner(
    scene: &Scene,
    tx: &Endpoint,
    rx_antenna: &AntennaPattern,
    grid: &GridSpec,
    f: f64,
    cfg: &EngineConfig,
    opts: &CoverageOptions,
) -> Result<CoverageGrid, ChannelError> {
    grid.validate()?;
    cfg.validate()?;
    if !(f > 0.0 && f.is_finite()) {
        return Err(EngineError::Frequency(f).into());
    }
    let prep = PreparedScene::new(scene, opts.time_s);
    let ptx = tx.resolve(&prep)?;
    let scatter = scatter_mask(&scene.materials);
    let centers = grid.centers();
    let mut cells: Vec<Option<CoverageCell>> = centers
        .par_iter()
        .map(|&p| {
            if p.distance(ptx) < 1e-9 {
                Some(masked_cell(p, "at transmitter"))
            } else if inside_geometry(&prep, p) {
                Some(masked_cell(p, "inside geometry"))
            } else {
                None
            }
        })
        .collect();
    let open: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].is_none()).collect();
    let batch = opts.batch_size.max(1);
    let mut done = 0;
    for chunk in open.chunks(batch) {
        if opts.cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            return Err(ChannelError::Cancelled);
        }
        let rxs: Vec<Vec3> = chunk.iter().map(|&i| centers[i]).collect();
        let geos = link_geometries(&prep, ptx, &rxs, cfg, &scatter);
        let evaluated: Vec<CoverageCell> = geos
            .par_iter()
            .map(|g| {
                let r = evaluate_link(&prep, &scene.materials, g, &tx.antenna, rx_antenna, f, cfg.rel_power_floor_db);
                let m = mpcs_of(&r);
                let p = g.rx;
                match path_loss(&m) {
                    None => masked_cell(p, "no paths"),
                    Some(pl) => CoverageCell {
                        x_m: p.x,
                        y_m: p.y,
                        z_m: p.z,
                        pl_db: Some(pl),
                        rsrp_dbm: Some(opts.tx_power_dbm - pl),
                        ds_ns: Some(rms_delay_spread(&m) * 1e9),
                        n_paths: m.len(),
                        masked: false,
                        note: None,
                    },
                }
            })
            .collect();
        for (&i, c) in chunk.iter().zip(evaluated) {
            cells[i] = Some(c);
        }
        done += chunk.len();
        if let Some(cb) = opts.progress {
            cb(done as f64 / open.len().max(1) as f64);
        }
    }
    Ok(CoverageGrid {
        schema_version: COVERAGE_SCHEMA_VERSION,
        origin: [grid.xmin, grid.ymin, grid.height],
        x_step: grid.step,
        y_step: grid.step,
        height: grid.height,
        n_x: grid.n_x(),
        n_y: grid.n_y(),
        freq_hz: f,
        tx: ptx.to_array(),
        tx_power_dbm: opts.tx_power_dbm,
        cells: cells.into_iter().map(|c| c.expect("every cell evaluated")).collect(),
    })
}
