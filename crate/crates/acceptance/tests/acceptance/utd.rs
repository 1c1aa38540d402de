use std::f64::consts::PI;

use num_complex::Complex64;
use raytwin::antenna::{AntennaPattern, GridPattern};
use raytwin::engine::{simulate_link, EngineConfig, Endpoint, InteractionKind};
use raytwin::fixtures;
use raytwin::materials::MaterialLibrary;
use raytwin::scene::Scene;
use raytwin::{Vec3, SPEED_OF_LIGHT};

use crate::Outcome;

const F: f64 = 3.5e9;

fn cfg() -> EngineConfig {
    EngineConfig {
        n_rays: 1 << 14,
        max_order: 1,
        max_reflections: 1,
        max_transmissions: 0,
        max_diffractions: 1,
        max_scatterings: 0,
        rel_power_floor_db: -300.0,
        image_method: true,
        ..EngineConfig::default()
    }
}

fn antennas() -> [(&'static str, AntennaPattern); 2] {
    let horizontal =
        AntennaPattern::grid(GridPattern::uniform(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), 1.0)).unwrap();
    [("theta", AntennaPattern::isotropic()), ("phi", horizontal)]
}

/// Knife-edge diffraction loss approximation J(nu), dB.
fn knife_edge_loss_db(nu: f64) -> f64 {
    6.9 + 20.0 * (((nu - 0.1).powi(2) + 1.0).sqrt() + nu - 0.1).log10()
}

/// Coherent power of the kept paths and the number of paths without
/// diffraction.
fn coherent_power(
    scene: &Scene,
    tx: Vec3,
    rx: Vec3,
    ant: &AntennaPattern,
    keep: impl Fn(&[InteractionKind]) -> bool,
) -> (f64, usize) {
    let r = simulate_link(scene, &Endpoint::new(tx, ant.clone()), &Endpoint::new(rx, ant.clone()), F, &cfg(), 0.0)
        .expect("link");
    let kinds = |p: &raytwin::engine::PropagationPath| p.interactions.iter().map(|i| i.kind).collect::<Vec<_>>();
    let power = r.paths.iter().filter(|p| keep(&kinds(p))).map(|p| p.amplitude).sum::<Complex64>().norm_sqr();
    let optical = r.paths.iter().filter(|p| !kinds(p).contains(&InteractionKind::Diffraction)).count();
    (power, optical)
}

/// Largest step in total received power (dB) while the receiver turns by
/// +-0.1 degrees about `pivot` around `axis`, starting from `boundary`.
/// `None` if no geometrical-optics path switches inside the sweep.
fn sweep_max_step(scene: &Scene, tx: Vec3, pivot: Vec3, boundary: Vec3, axis: Vec3, ant: &AntennaPattern) -> Option<f64> {
    let r = boundary - pivot;
    let n = 100;
    let samples: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let d = (-0.1 + 0.2 * (i as f64 + 0.5) / n as f64).to_radians();
            // Rodrigues rotation of r about the unit axis.
            let rot = r * d.cos() + axis.cross(r) * d.sin() + axis * axis.dot(r) * (1.0 - d.cos());
            let (p, optical) = coherent_power(scene, tx, pivot + rot, ant, |_| true);
            (10.0 * p.log10(), optical)
        })
        .collect();
    let switched = samples.first().map(|s| s.1) != samples.last().map(|s| s.1);
    switched.then(|| samples.windows(2).map(|w| (w[1].0 - w[0].0).abs()).fold(0.0, f64::max))
}

fn corner_box() -> Scene {
    let lib = MaterialLibrary::builtin();
    let concrete = lib.id_of("concrete").unwrap();
    let (v, t) = fixtures::box_mesh(Vec3::new(0.0, 0.0, 0.0), Vec3::new(10.0, 10.0, 20.0), concrete, true);
    Scene::new(v, t, vec![], lib).unwrap()
}

pub fn sanity() -> Outcome {
    let lambda = SPEED_OF_LIGHT / F;
    let mut worst_knife: f64 = 0.0;
    let mut worst_step: f64 = 0.0;
    let mut notes = Vec::new();
    let (d1, d2, z0) = (100.0, 100.0, 10.0);
    let tx = Vec3::new(-d1, 0.0, z0);
    for (pol, ant) in antennas() {
        for nu in [1.0, 1.5, 2.0, 2.5, 3.0] {
            let h = nu / (2.0 * (d1 + d2) / (lambda * d1 * d2)).sqrt();
            let scene = fixtures::knife_edge(z0 + h, 2000.0, 1.0);
            let rx = Vec3::new(d2, 0.0, z0);
            let (p, _) = coherent_power(&scene, tx, rx, &ant, |k| k == [InteractionKind::Diffraction]);
            let free = (lambda / (4.0 * PI * (d1 + d2))).powi(2);
            let excess = 10.0 * (free / p).log10();
            worst_knife = worst_knife.max((excess - knife_edge_loss_db(nu)).abs());
        }
        // Incident shadow boundary over the knife edge.
        let apex = Vec3::new(0.0, 0.0, z0 + 3.0);
        let scene = fixtures::knife_edge(apex.z, 2000.0, 1.0);
        let boundary = apex + (apex - tx).normalized() * 100.0;
        let knife = sweep_max_step(&scene, tx, apex, boundary, Vec3::Y, &ant);
        // Reflection and incident shadow boundaries of a concrete corner.
        let scene = corner_box();
        let (tx, corner) = (Vec3::new(30.0, 5.0, 10.0), Vec3::new(10.0, 10.0, 10.0));
        let image = Vec3::new(-10.0, 5.0, 10.0);
        let rsb = sweep_max_step(&scene, tx, corner, corner + (corner - image).normalized() * 20.0, Vec3::Z, &ant);
        let isb = sweep_max_step(&scene, tx, corner, corner + (corner - tx).normalized() * 20.0, Vec3::Z, &ant);
        let show = |s: Option<f64>| s.map_or("no switch".to_string(), |v| format!("{v:.3} dB"));
        notes.push(format!("{pol}: knife ISB {}, corner RSB {}, corner ISB {}", show(knife), show(rsb), show(isb)));
        for s in [knife, rsb, isb] {
            worst_step = worst_step.max(s.unwrap_or(f64::INFINITY));
        }
    }
    Outcome::new(
        worst_knife <= 1.5 && worst_step < 0.5,
        format!(
            "knife-edge max |UTD - J(nu)| = {worst_knife:.2} dB over nu in [1,3] (limit 1.5); \
             max power step across shadow boundaries = {worst_step:.3} dB (limit 0.5); {}",
            notes.join("; ")
        ),
    )
}
