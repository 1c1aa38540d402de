use std::collections::BTreeSet;
use std::time::Instant;

use raytwin::antenna::AntennaPattern;
use raytwin::engine::{enumerate_images, evaluate_link, link_geometry, signature_of, EngineConfig, LinkGeometry, PreparedScene, Signature};
use raytwin::fixtures;
use raytwin::profiles;

use crate::Outcome;

const ROOMS: u64 = 20;
const F: f64 = 5e9;

fn total_power(prep: &PreparedScene, lib: &raytwin::materials::MaterialLibrary, geo: &LinkGeometry) -> f64 {
    let iso = AntennaPattern::isotropic();
    evaluate_link(prep, lib, geo, &iso, &iso, F, -400.0).total_power()
}

/// Specular-only version of a preset, with the image method off so that
/// only ray launching contributes paths, capped at the image-method order.
fn sbr_only(name: &str) -> EngineConfig {
    let base = profiles::builtin(name).unwrap().engine;
    let order = base.max_reflections.min(base.max_order).min(3);
    EngineConfig {
        max_order: order,
        max_reflections: order,
        max_transmissions: 0,
        max_diffractions: 0,
        max_scatterings: 0,
        image_method: false,
        ..base
    }
}

pub fn equivalence() -> Outcome {
    let t0 = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    for name in profiles::PRESET_NAMES {
        let cfg = sbr_only(name);
        let need = if name == "offline" { 0.99 } else { 0.90 };
        let (mut false_paths, mut worst, mut found, mut total) = (0usize, f64::INFINITY, 0usize, 0usize);
        for seed in 0..ROOMS {
            let case = fixtures::random_room(seed);
            let prep = PreparedScene::new(&case.scene, 0.0);
            let lib = &case.scene.materials;
            let geo = link_geometry(&prep, case.tx, case.rx, &cfg, &[]);
            let reference_paths = enumerate_images(&prep, geo.start(), geo.end(), cfg.max_reflections).unwrap();
            let reference: BTreeSet<Signature> = reference_paths.iter().map(|p| signature_of(p)).collect();
            let got: BTreeSet<Signature> = geo.paths.iter().map(|p| signature_of(p)).collect();
            false_paths += got.difference(&reference).count();
            found += got.intersection(&reference).count();
            total += reference.len();
            let im = LinkGeometry { paths: reference_paths, ..geo.clone() };
            let ratio = total_power(&prep, lib, &geo) / total_power(&prep, lib, &im);
            worst = worst.min(ratio);
        }
        pass &= false_paths == 0 && worst >= need;
        notes.push(format!(
            "{name}: {false_paths} false paths, {found}/{total} image paths found, worst power recall {:.2} % (need {:.0} %)",
            100.0 * worst,
            100.0 * need
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    notes.push(format!("{ROOMS} rooms per profile in {secs:.1} s (limit 120 s)"));
    Outcome::new(pass, notes.join("; "))
}
