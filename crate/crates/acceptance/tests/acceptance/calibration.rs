use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raytwin::antenna::AntennaPattern;
use raytwin::calibrate::{
    simulated_annealing, split_points, synthetic_measurements, CalibrationProblem, ParameterSpec, SaSchedule,
    DEFAULT_PENALTY_DB,
};
use raytwin::channel::inside_geometry;
use raytwin::engine::{Endpoint, PreparedScene};
use raytwin::fixtures;
use raytwin::materials::{MaterialField, MaterialLibrary};
use raytwin::profiles;
use raytwin::Vec3;

use crate::Outcome;

const TRUTH: f64 = 5.0;
const START: f64 = 3.0;
const F: f64 = 3.5e9;
const POINTS: usize = 119;
const VALIDATION: usize = 30;

fn library(concrete_eps: f64) -> MaterialLibrary {
    let mut lib = MaterialLibrary::builtin();
    lib.set_field("concrete", MaterialField::EpsR, concrete_eps).unwrap();
    lib
}

fn positions() -> Vec<Vec3> {
    let campus = fixtures::campus();
    let prep = PreparedScene::new(&campus.scene, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = Vec::new();
    while out.len() < POINTS {
        let p = Vec3::new(rng.random_range(-55.0..55.0), rng.random_range(-55.0..55.0), 1.5);
        if !inside_geometry(&prep, p) && p.distance(campus.tx) > 5.0 {
            out.push(p);
        }
    }
    out
}

/// Calibrate concrete eps_r from `START` on measurements generated with
/// `TRUTH`. Returns (recovered value, validation RMSE before, after,
/// seconds).
fn run(noise_db: f64, seed: u64, positions: &[Vec3]) -> (f64, f64, f64, f64) {
    let t0 = Instant::now();
    let cfg = profiles::calibration_engine();
    let truth = fixtures::campus_with(library(TRUTH));
    let tx = Endpoint::new(truth.tx, AntennaPattern::vertical_dipole());
    let rx = AntennaPattern::vertical_dipole();
    let points = synthetic_measurements(&truth.scene, &tx, &rx, positions, F, &cfg, noise_db, seed).unwrap();
    let (train, validation) = split_points(&points, VALIDATION, seed).unwrap();
    let problem = CalibrationProblem {
        scene: fixtures::campus_with(library(START)).scene,
        tx,
        rx_antenna: rx,
        train,
        validation,
        params: vec![ParameterSpec::parse("concrete.eps_r:2..8").unwrap()],
        cfg,
        penalty_db: DEFAULT_PENALTY_DB,
    };
    let r = simulated_annealing(&problem, &SaSchedule { seed, ..SaSchedule::default() }).unwrap();
    (r.params[0].value, r.rmse_validation_before, r.rmse_validation_after, t0.elapsed().as_secs_f64())
}

pub fn recovery() -> Outcome {
    let t0 = Instant::now();
    let pos = positions();
    let (value, _, val_after, mut slowest) = run(0.0, 1, &pos);
    let recovered = (value - TRUTH).abs() <= 0.5;
    let mut improved = 0;
    let mut noisy = Vec::new();
    for seed in 0..5 {
        let (v, before, after, secs) = run(2.0, 100 + seed, &pos);
        slowest = slowest.max(secs);
        if after < before {
            improved += 1;
        }
        noisy.push(format!("{v:.2} ({before:.2} -> {after:.2} dB)"));
    }
    let secs = t0.elapsed().as_secs_f64();
    Outcome::new(
        recovered && val_after < 1.0 && improved >= 4 && slowest < 600.0,
        format!(
            "noiseless: concrete eps_r {value:.3} from start {START} (truth {TRUTH}, tolerance 0.5), validation RMSE {val_after:.3} dB (limit 1); \
             2 dB noise: validation improved on {improved}/5 seeds [{}]; slowest run {slowest:.1} s (limit 600 s), all six {secs:.1} s",
            noisy.join(", ")
        ),
    )
}
