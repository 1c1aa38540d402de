use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raytwin::antenna::AntennaPattern;
use raytwin::channel::inside_geometry;
use raytwin::engine::{simulate_link_prepared, ChannelRealization, Endpoint, PreparedScene};
use raytwin::fixtures;
use raytwin::profiles;
use raytwin::Vec3;

use crate::Outcome;

const PAIRS: usize = 100;
const DELAY_TOL_S: f64 = 1e-9;
const POWER_TOL_DB: f64 = 0.01;

/// Greedy one-to-one match of (delay, power) pairs within tolerance.
fn same_multiset(a: &ChannelRealization, b: &ChannelRealization) -> bool {
    if a.paths.len() != b.paths.len() {
        return false;
    }
    let mut used = vec![false; b.paths.len()];
    a.paths.iter().all(|p| {
        let hit = b.paths.iter().enumerate().position(|(j, q)| {
            !used[j] && (p.delay_s - q.delay_s).abs() <= DELAY_TOL_S && (p.power_db() - q.power_db()).abs() <= POWER_TOL_DB
        });
        hit.map(|j| used[j] = true).is_some()
    })
}

pub fn campus_pairs() -> Outcome {
    let campus = fixtures::campus();
    let prep = PreparedScene::new(&campus.scene, 0.0);
    let cfg = profiles::builtin("online").unwrap().engine;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let point = |rng: &mut ChaCha8Rng, zmax: f64| loop {
        let p = Vec3::new(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0), rng.random_range(1.5..zmax));
        if !inside_geometry(&prep, p) {
            return p;
        }
    };
    let (mut ok, mut paths) = (0, 0);
    let mut first_bad = None;
    for k in 0..PAIRS {
        let a = Endpoint::new(point(&mut rng, 30.0), AntennaPattern::vertical_dipole());
        let b = Endpoint::new(point(&mut rng, 3.0), AntennaPattern::vertical_dipole());
        let ab = simulate_link_prepared(&prep, &campus.scene.materials, &a, &b, 3.5e9, &cfg).unwrap();
        let ba = simulate_link_prepared(&prep, &campus.scene.materials, &b, &a, 3.5e9, &cfg).unwrap();
        paths += ab.paths.len();
        if same_multiset(&ab, &ba) {
            ok += 1;
        } else if first_bad.is_none() {
            first_bad = Some(format!("pair {k}: {} vs {} paths", ab.paths.len(), ba.paths.len()));
        }
    }
    Outcome::new(
        ok == PAIRS,
        format!(
            "{ok}/{PAIRS} campus pairs with equal (delay, power) multisets under swap ({paths} paths, tolerance 1 ns / 0.01 dB){}",
            first_bad.map(|s| format!("; first mismatch {s}")).unwrap_or_default()
        ),
    )
}
