//! Material calibration against path-loss measurements by simulated
//! annealing.
//!
//! Link geometry does not depend on material parameters, so it is traced
//! once per measurement position and only the field evaluation is repeated
//! for each candidate parameter set.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::antenna::AntennaPattern;
use crate::channel::{mpcs_of, path_loss};
use crate::engine::{evaluate_link, link_geometries, EngineConfig, EngineError, Endpoint, LinkGeometry, PreparedScene};
use crate::geometry::Vec3;
use crate::materials::{MaterialField, MaterialLibrary};
use crate::scene::Scene;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_PENALTY_DB: f64 = 30.0;

#[derive(Debug, thiserror::Error)]
pub enum CalibrateError {
    #[error("infeasible parameter: {0}")]
    Bounds(String),
    #[error("bad parameter spec {0:?}: expected material.field:lo..hi")]
    Spec(String),
    #[error("validation count {count} must be in 1..{total}")]
    Split { count: usize, total: usize },
    #[error("no training points")]
    NoPoints,
    #[error("measurement file: {0}")]
    Measurements(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservedKind {
    Pl,
    Rsrp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LosClass {
    LoS,
    OLoS,
    NLoS,
}

impl LosClass {
    fn parse(s: &str) -> Option<Option<Self>> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "" => None,
            "los" => Some(LosClass::LoS),
            "olos" => Some(LosClass::OLoS),
            "nlos" => Some(LosClass::NLoS),
            _ => return None,
        })
    }

    fn as_str(self) -> &'static str {
        match self {
            LosClass::LoS => "LoS",
            LosClass::OLoS => "OLoS",
            LosClass::NLoS => "NLoS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPoint {
    pub position: Vec3,
    pub freq_hz: f64,
    pub observed_db: f64,
    pub kind: ObservedKind,
    pub tx_power_dbm: f64,
    pub los_class: Option<LosClass>,
}

impl MeasurementPoint {
    pub fn pl(position: Vec3, freq_hz: f64, pl_db: f64) -> Self {
        MeasurementPoint { position, freq_hz, observed_db: pl_db, kind: ObservedKind::Pl, tx_power_dbm: 0.0, los_class: None }
    }

    /// Observed path loss in dB.
    pub fn observed_pl(&self) -> f64 {
        match self.kind {
            ObservedKind::Pl => self.observed_db,
            ObservedKind::Rsrp => self.tx_power_dbm - self.observed_db,
        }
    }
}

pub const MEASUREMENT_HEADER: [&str; 8] = ["x_m", "y_m", "z_m", "freq_hz", "observed_db", "kind", "tx_power_dbm", "los_class"];

pub fn read_measurements<R: Read>(r: R) -> Result<Vec<MeasurementPoint>, CalibrateError> {
    let bad = |m: String| CalibrateError::Measurements(m);
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != MEASUREMENT_HEADER {
        return Err(bad(format!("header must be {}", MEASUREMENT_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = line + 2;
        let num = |i: usize| -> Result<f64, CalibrateError> {
            let v: f64 = rec[i].parse().map_err(|_| bad(format!("row {row}: bad {}", MEASUREMENT_HEADER[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("row {row}: {} not finite", MEASUREMENT_HEADER[i])))
            }
        };
        let kind = match rec[5].to_ascii_lowercase().as_str() {
            "pl" => ObservedKind::Pl,
            "rsrp" => ObservedKind::Rsrp,
            k => return Err(bad(format!("row {row}: kind {k:?} is not pl|rsrp"))),
        };
        let tx_power_dbm = if rec[6].is_empty() && kind == ObservedKind::Pl { 0.0 } else { num(6)? };
        let los_class = LosClass::parse(&rec[7]).ok_or_else(|| bad(format!("row {row}: bad los_class")))?;
        let freq_hz = num(3)?;
        if freq_hz <= 0.0 {
            return Err(bad(format!("row {row}: freq_hz must be positive")));
        }
        out.push(MeasurementPoint {
            position: Vec3::new(num(0)?, num(1)?, num(2)?),
            freq_hz,
            observed_db: num(4)?,
            kind,
            tx_power_dbm,
            los_class,
        });
    }
    Ok(out)
}

pub fn load_measurements(path: &Path) -> Result<Vec<MeasurementPoint>, CalibrateError> {
    let f = std::fs::File::open(path).map_err(|e| CalibrateError::Measurements(format!("{}: {e}", path.display())))?;
    read_measurements(f)
}

pub fn write_measurements<W: Write>(points: &[MeasurementPoint], w: W) -> std::io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(MEASUREMENT_HEADER)?;
    for p in points {
        wr.write_record([
            p.position.x.to_string(),
            p.position.y.to_string(),
            p.position.z.to_string(),
            p.freq_hz.to_string(),
            p.observed_db.to_string(),
            match p.kind {
                ObservedKind::Pl => "pl".into(),
                ObservedKind::Rsrp => "rsrp".into(),
            },
            p.tx_power_dbm.to_string(),
            p.los_class.map(|c| c.as_str().to_string()).unwrap_or_default(),
        ])?;
    }
    wr.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub material: String,
    pub field: MaterialField,
    pub lo: f64,
    pub hi: f64,
}

impl ParameterSpec {
    /// Parse `material.field:lo..hi`.
    pub fn parse(s: &str) -> Result<Self, CalibrateError> {
        let err = || CalibrateError::Spec(s.to_string());
        let (target, range) = s.split_once(':').ok_or_else(err)?;
        let (material, field) = target.rsplit_once('.').ok_or_else(err)?;
        let field = MaterialField::parse(field).ok_or_else(err)?;
        let (lo, hi) = range.split_once("..").ok_or_else(err)?;
        let lo: f64 = lo.trim().parse().map_err(|_| err())?;
        let hi: f64 = hi.trim().parse().map_err(|_| err())?;
        if material.is_empty() {
            return Err(err());
        }
        Ok(ParameterSpec { material: material.to_string(), field, lo, hi })
    }

    pub fn name(&self) -> String {
        format!("{}.{}", self.material, self.field.as_str())
    }

    pub fn check(&self, lib: &MaterialLibrary) -> Result<(), CalibrateError> {
        let (dlo, dhi) = self.field.domain();
        if lib.id_of(&self.material).is_none() {
            return Err(CalibrateError::Bounds(format!("unknown material {:?}", self.material)));
        }
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Err(CalibrateError::Bounds(format!("{}: lo {} > hi {}", self.name(), self.lo, self.hi)));
        }
        if self.lo < dlo || self.hi > dhi {
            return Err(CalibrateError::Bounds(format!("{}: [{}, {}] outside [{dlo}, {dhi}]", self.name(), self.lo, self.hi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaSchedule {
    pub t0: f64,
    pub cooling: f64,
    pub steps: usize,
    pub moves_per_step: usize,
    pub step_scale: f64,
    pub seed: u64,
}

impl Default for SaSchedule {
    fn default() -> Self {
        SaSchedule { t0: 25.0, cooling: 0.95, steps: 60, moves_per_step: 10, step_scale: 0.1, seed: 0 }
    }
}

impl SaSchedule {
    pub fn validate(&self) -> Result<(), CalibrateError> {
        let ok = self.t0 > 0.0
            && self.cooling > 0.0
            && self.cooling < 1.0
            && self.steps > 0
            && self.moves_per_step > 0
            && self.step_scale > 0.0
            && self.t0.is_finite()
            && self.step_scale.is_finite();
        ok.then_some(()).ok_or_else(|| CalibrateError::Schedule("t0, steps, moves and step_scale must be positive; 0 < cooling < 1".into()))
    }
}

/// Deterministic seeded shuffle, then the first `validation_count` points
/// become the validation set.
pub fn split_points(
    points: &[MeasurementPoint],
    validation_count: usize,
    seed: u64,
) -> Result<(Vec<MeasurementPoint>, Vec<MeasurementPoint>), CalibrateError> {
    if validation_count == 0 || validation_count >= points.len() {
        return Err(CalibrateError::Split { count: validation_count, total: points.len() });
    }
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let validation = idx[..validation_count].iter().map(|&i| points[i].clone()).collect();
    let train = idx[validation_count..].iter().map(|&i| points[i].clone()).collect();
    Ok((train, validation))
}

/// Traced geometry for a fixed set of measurement positions.
pub struct LinkSet {
    prep: PreparedScene,
    tx: Endpoint,
    rx_antenna: AntennaPattern,
    cfg: EngineConfig,
    geos: Vec<LinkGeometry>,
    freqs: Vec<f64>,
}

impl LinkSet {
    /// `scatter_candidates` marks materials whose surfaces may scatter for
    /// some parameter value.
    pub fn trace(
        scene: &Scene,
        tx: &Endpoint,
        rx_antenna: &AntennaPattern,
        points: &[MeasurementPoint],
        cfg: &EngineConfig,
        scatter_candidates: &[bool],
    ) -> Result<Self, CalibrateError> {
        cfg.validate()?;
        let prep = PreparedScene::new(scene, 0.0);
        let ptx = tx.resolve(&prep)?;
        let rxs: Vec<Vec3> = points.iter().map(|p| p.position).collect();
        let geos = link_geometries(&prep, ptx, &rxs, cfg, scatter_candidates);
        Ok(LinkSet {
            prep,
            tx: tx.clone(),
            rx_antenna: rx_antenna.clone(),
            cfg: cfg.clone(),
            geos,
            freqs: points.iter().map(|p| p.freq_hz).collect(),
        })
    }

    /// Predicted path loss per point; `None` where no path survives.
    pub fn predict(&self, lib: &MaterialLibrary) -> Vec<Option<f64>> {
        self.geos
            .par_iter()
            .zip(self.freqs.par_iter())
            .map(|(g, &f)| {
                let r = evaluate_link(&self.prep, lib, g, &self.tx.antenna, &self.rx_antenna, f, self.cfg.rel_power_floor_db);
                path_loss(&mpcs_of(&r))
            })
            .collect()
    }
}

/// RMSE of predicted against observed path loss; missing predictions
/// count as an error of `penalty_db`.
pub fn rmse(pred: &[Option<f64>], points: &[MeasurementPoint], penalty_db: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let sq: f64 = pred
        .iter()
        .zip(points)
        .map(|(p, m)| match p {
            Some(v) => (v - m.observed_pl()).powi(2),
            None => penalty_db * penalty_db,
        })
        .sum();
    (sq / points.len() as f64).sqrt()
}

pub struct CalibrationProblem {
    pub scene: Scene,
    pub tx: Endpoint,
    pub rx_antenna: AntennaPattern,
    pub train: Vec<MeasurementPoint>,
    pub validation: Vec<MeasurementPoint>,
    pub params: Vec<ParameterSpec>,
    pub cfg: EngineConfig,
    pub penalty_db: f64,
}

/// Library with `values` written into the targeted fields.
pub fn apply_params(lib: &MaterialLibrary, params: &[ParameterSpec], values: &[f64]) -> MaterialLibrary {
    let mut out = lib.clone();
    for (p, &v) in params.iter().zip(values) {
        out.set_field(&p.material, p.field, v).expect("parameter checked against library");
    }
    out
}

/// Prepared objective over one point set.
pub struct Objective<'a> {
    problem: &'a CalibrationProblem,
    links: LinkSet,
    points: &'a [MeasurementPoint],
}

impl<'a> Objective<'a> {
    pub fn new(problem: &'a CalibrationProblem, points: &'a [MeasurementPoint]) -> Result<Self, CalibrateError> {
        let lib = &problem.scene.materials;
        let mut scatter: Vec<bool> = lib.materials().iter().map(|m| m.scatter_s > 0.0).collect();
        for p in &problem.params {
            if p.field == MaterialField::ScatterS && p.hi > 0.0 {
                scatter[lib.id_of(&p.material).expect("checked") as usize] = true;
            }
        }
        let links = LinkSet::trace(&problem.scene, &problem.tx, &problem.rx_antenna, points, &problem.cfg, &scatter)?;
        Ok(Objective { problem, links, points })
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        let lib = apply_params(&self.problem.scene.materials, &self.problem.params, values);
        rmse(&self.links.predict(&lib), self.points, self.problem.penalty_db)
    }
}

/// One parameter-set RMSE evaluation without caching.
pub fn objective(problem: &CalibrationProblem, values: &[f64], points: &[MeasurementPoint]) -> Result<f64, CalibrateError> {
    Ok(Objective::new(problem, points)?.eval(values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamResult {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub start: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub temperature: f64,
    pub proposed_rmse_db: f64,
    pub current_rmse_db: f64,
    pub best_rmse_db: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: Vec<ParamResult>,
    pub rmse_train_before: f64,
    pub rmse_train_after: f64,
    pub rmse_validation_before: f64,
    pub rmse_validation_after: f64,
    pub trace: Vec<TraceEntry>,
}

impl CalibrationResult {
    pub fn best_values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }
}

fn reflect_into(mut v: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let w = hi - lo;
    // Fold onto [lo, lo + 2w) then mirror the upper half.
    let mut t = (v - lo).rem_euclid(2.0 * w);
    if t > w {
        t = 2.0 * w - t;
    }
    v = lo + t;
    v.clamp(lo, hi)
}

/// Starting values: current library values clamped into the bounds.
pub fn start_values(problem: &CalibrationProblem) -> Vec<f64> {
    let lib = &problem.scene.materials;
    problem
        .params
        .iter()
        .map(|p| {
            let m = &lib[lib.id_of(&p.material).expect("checked")];
            let f = problem.train.first().map_or(1e9, |x| x.freq_hz);
            m.field_at(p.field, f).clamp(p.lo, p.hi)
        })
        .collect()
}

/// Metropolis simulated annealing on the training RMSE. Acceptance uses
/// the change in mean squared error (dB^2) against the temperature.
pub fn simulated_annealing(problem: &CalibrationProblem, schedule: &SaSchedule) -> Result<CalibrationResult, CalibrateError> {
    schedule.validate()?;
    if problem.params.is_empty() {
        return Err(CalibrateError::Bounds("no parameters".into()));
    }
    if problem.train.is_empty() {
        return Err(CalibrateError::NoPoints);
    }
    for p in &problem.params {
        p.check(&problem.scene.materials)?;
    }
    let train = Objective::new(problem, &problem.train)?;
    let start = start_values(problem);
    let before = train.eval(&start);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let sigmas: Vec<f64> = problem.params.iter().map(|p| schedule.step_scale * (p.hi - p.lo)).collect();
    let (mut cur, mut f_cur) = (start.clone(), before);
    let (mut best, mut f_best) = (start.clone(), before);
    let mut temp = schedule.t0;
    let mut trace = Vec::with_capacity(schedule.steps * schedule.moves_per_step);
    for _ in 0..schedule.steps {
        for _ in 0..schedule.moves_per_step {
            let cand: Vec<f64> = problem
                .params
                .iter()
                .zip(&cur)
                .zip(&sigmas)
                .map(|((p, &x), &s)| {
                    if s > 0.0 {
                        let step = Normal::new(0.0, s).expect("positive sigma").sample(&mut rng);
                        reflect_into(x + step, p.lo, p.hi)
                    } else {
                        p.lo
                    }
                })
                .collect();
            let f_cand = train.eval(&cand);
            let delta = f_cand * f_cand - f_cur * f_cur;
            let u: f64 = rng.random();
            let accepted = delta <= 0.0 || u < (-delta / temp).exp();
            if accepted {
                cur = cand;
                f_cur = f_cand;
                if f_cur < f_best {
                    best = cur.clone();
                    f_best = f_cur;
                }
            }
            trace.push(TraceEntry { temperature: temp, proposed_rmse_db: f_cand, current_rmse_db: f_cur, best_rmse_db: f_best, accepted });
        }
        temp *= schedule.cooling;
    }
    let (v_before, v_after) = if problem.validation.is_empty() {
        (0.0, 0.0)
    } else {
        let v = Objective::new(problem, &problem.validation)?;
        (v.eval(&start), v.eval(&best))
    };
    Ok(CalibrationResult {
        params: problem
            .params
            .iter()
            .zip(start.iter().zip(&best))
            .map(|(p, (&s, &b))| ParamResult { name: p.name(), lo: p.lo, hi: p.hi, start: s, value: b })
            .collect(),
        rmse_train_before: before,
        rmse_train_after: f_best,
        rmse_validation_before: v_before,
        rmse_validation_after: v_after,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSummary {
    pub length: usize,
    pub accepted: usize,
    pub first_rmse_db: f64,
    pub best_rmse_db: f64,
    pub final_temperature: f64,
}

/// Machine-readable calibration report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationReport {
    pub schema_version: u32,
    pub n_train: usize,
    pub n_validation: usize,
    pub schedule: SaSchedule,
    pub params: Vec<ParamResult>,
    pub rmse_train_before: f64,
    pub rmse_train_after: f64,
    pub rmse_validation_before: f64,
    pub rmse_validation_after: f64,
    pub trace_summary: TraceSummary,
    pub trace: Vec<TraceEntry>,
}

pub fn report(result: &CalibrationResult, schedule: &SaSchedule, n_train: usize, n_validation: usize) -> CalibrationReport {
    CalibrationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n_train,
        n_validation,
        schedule: schedule.clone(),
        params: result.params.clone(),
        rmse_train_before: result.rmse_train_before,
        rmse_train_after: result.rmse_train_after,
        rmse_validation_before: result.rmse_validation_before,
        rmse_validation_after: result.rmse_validation_after,
        trace_summary: TraceSummary {
            length: result.trace.len(),
            accepted: result.trace.iter().filter(|t| t.accepted).count(),
            first_rmse_db: result.rmse_train_before,
            best_rmse_db: result.trace.last().map_or(result.rmse_train_after, |t| t.best_rmse_db),
            final_temperature: result.trace.last().map_or(schedule.t0, |t| t.temperature),
        },
        trace: result.trace.clone(),
    }
}

impl CalibrationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fixed-width summary table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<24} {:>10} {:>10} {:>10} {:>10}\n", "parameter", "lo", "hi", "start", "best"));
        for p in &self.params {
            s.push_str(&format!("{:<24} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n", p.name, p.lo, p.hi, p.start, p.value));
        }
        s.push_str(&format!("{:<24} {:>10} {:>10}\n", "RMSE (dB)", "before", "after"));
        s.push_str(&format!("{:<24} {:>10.3} {:>10.3}\n", format!("train ({})", self.n_train), self.rmse_train_before, self.rmse_train_after));
        s.push_str(&format!(
            "{:<24} {:>10.3} {:>10.3}\n",
            format!("validation ({})", self.n_validation),
            self.rmse_validation_before,
            self.rmse_validation_after
        ));
        s.push_str(&format!(
            "trace: {} moves, {} accepted, final T {:.4}\n",
            self.trace_summary.length, self.trace_summary.accepted, self.trace_summary.final_temperature
        ));
        s
    }
}

/// Engine-generated measurements with optional Gaussian noise in dB.
/// Points without any path are skipped.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_measurements(
    scene: &Scene,
    tx: &Endpoint,
    rx_antenna: &AntennaPattern,
    positions: &[Vec3],
    f: f64,
    cfg: &EngineConfig,
    noise_db: f64,
    seed: u64,
) -> Result<Vec<MeasurementPoint>, CalibrateError> {
    let points: Vec<MeasurementPoint> = positions.iter().map(|&p| MeasurementPoint::pl(p, f, 0.0)).collect();
    let scatter: Vec<bool> = scene.materials.materials().iter().map(|m| m.scatter_s > 0.0).collect();
    let links = LinkSet::trace(scene, tx, rx_antenna, &points, cfg, &scatter)?;
    let pred = links.predict(&scene.materials);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_db.max(0.0)).expect("finite noise");
    Ok(points
        .into_iter()
        .zip(pred)
        .filter_map(|(mut m, p)| {
            let n = noise.sample(&mut rng);
            p.map(|pl| {
                m.observed_db = pl + n;
                m
            })
        })
        .collect())
}
