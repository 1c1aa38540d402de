use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raytwin::antenna::AntennaPattern;
use raytwin::channel::{coverage, inside_geometry, CoverageOptions, GridSpec};
use raytwin::engine::{simulate_link_prepared, Endpoint, PreparedScene};
use raytwin::fixtures;
use raytwin::profiles;
use raytwin::Vec3;

use crate::Outcome;

const ONLINE_BUDGET_MS: f64 = 100.0;
const COVERAGE_BUDGET_S: f64 = 600.0;

pub fn targets() -> Outcome {
    let campus = fixtures::campus();
    let dipole = AntennaPattern::vertical_dipole();
    let tx = Endpoint::new(campus.tx, dipole.clone());

    let prep = PreparedScene::new(&campus.scene, 0.0);
    let online = profiles::builtin("online").unwrap().engine;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut times = Vec::new();
    while times.len() < 51 {
        let p = Vec3::new(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0), 1.5);
        if inside_geometry(&prep, p) {
            continue;
        }
        let t0 = Instant::now();
        // Scene preparation is part of the per-request cost.
        let prep = PreparedScene::new(&campus.scene, 0.0);
        simulate_link_prepared(&prep, &campus.scene.materials, &tx, &Endpoint::new(p, dipole.clone()), 3.5e9, &online).unwrap();
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    let median_ms = times[times.len() / 2];

    // 40 x 25 cells.
    let grid = GridSpec { xmin: -50.0, ymin: -30.0, xmax: 50.0, ymax: 32.5, step: 2.5, height: 1.5 };
    let offline = profiles::builtin("offline").unwrap().engine;
    let t0 = Instant::now();
    let cov = coverage(&campus.scene, &tx, &dipole, &grid, 3.5e9, &offline, &CoverageOptions::default()).unwrap();
    let cov_s = t0.elapsed().as_secs_f64();

    let threads = rayon::current_num_threads();
    Outcome::new(
        median_ms <= ONLINE_BUDGET_MS && cov_s <= COVERAGE_BUDGET_S,
        format!(
            "online campus link median {median_ms:.1} ms over {} links (target {ONLINE_BUDGET_MS} ms); \
             offline coverage of {} points in {cov_s:.1} s, {:.1} % covered (target {COVERAGE_BUDGET_S} s); {threads} thread(s)",
            times.len(),
            cov.cells.len(),
            100.0 * cov.covered_fraction()
        ),
    )
}
