use std::f64::consts::PI;

use num_complex::Complex64;
use raytwin::antenna::{AntennaPattern, GridPattern};
use raytwin::engine::{simulate_link, Endpoint};
use raytwin::fixtures;
use raytwin::materials::{complex_permittivity, MaterialLibrary};
use raytwin::profiles;
use raytwin::{Vec3, SPEED_OF_LIGHT};

use crate::Outcome;

fn fspl_db(d: f64, f: f64) -> f64 {
    20.0 * (4.0 * PI * d * f / SPEED_OF_LIGHT).log10()
}

pub fn free_space() -> Outcome {
    let scene = fixtures::free_space();
    let mut worst: f64 = 0.0;
    let mut delay_err: f64 = 0.0;
    let mut hand = Vec::new();
    for name in profiles::PRESET_NAMES {
        let cfg = profiles::builtin(name).unwrap().engine;
        for (d, f) in [(100.0, 6e9), (1000.0, 14.8e9), (1.0, 1e9), (37.5, 3.5e9), (2500.0, 28e9)] {
            let tx = Endpoint::isotropic(Vec3::new(3.0, -2.0, 1.5));
            let rx = Endpoint::isotropic(tx.position + Vec3::from_az_el_deg(33.0, 12.0) * d);
            let r = simulate_link(&scene, &tx, &rx, f, &cfg, 0.0).unwrap();
            if r.paths.len() != 1 {
                return Outcome::new(false, format!("{name}: {} paths at d = {d} m", r.paths.len()));
            }
            let pl = -r.paths[0].power_db();
            worst = worst.max((pl - fspl_db(d, f)).abs());
            delay_err = delay_err.max((r.paths[0].delay_s - d / SPEED_OF_LIGHT).abs() / (d / SPEED_OF_LIGHT));
            if name == "offline" && (d == 100.0 || d == 1000.0) {
                hand.push(pl);
            }
        }
    }
    let hand_ok = (hand[0] - 88.01).abs() < 0.01 && (hand[1] - 115.86).abs() < 0.01;
    Outcome::new(
        worst < 1e-9 && delay_err < 1e-12 && hand_ok,
        format!(
            "max |PL - FSPL| = {worst:.1e} dB, max relative delay error {delay_err:.1e}; 6 GHz/100 m and 14.8 GHz/1 km give {:.3} and {:.3} dB",
            hand[0], hand[1]
        ),
    )
}

/// Coherent LoS plus ground reflection for horizontal polarisation over a
/// flat half-space with relative permittivity `eps`.
fn two_ray_oracle_db(ht: f64, hr: f64, d: f64, eps: Complex64, f: f64) -> f64 {
    let k = 2.0 * PI * f / SPEED_OF_LIGHT;
    let d1 = (d * d + (ht - hr).powi(2)).sqrt();
    let d2 = (d * d + (ht + hr).powi(2)).sqrt();
    let sin = (ht + hr) / d2;
    let root = (eps - (1.0 - sin * sin)).sqrt();
    let gamma = (sin - root) / (sin + root);
    let lambda = SPEED_OF_LIGHT / f;
    let sum = Complex64::from_polar(1.0 / d1, -k * d1) + gamma * Complex64::from_polar(1.0 / d2, -k * d2);
    10.0 * ((lambda / (4.0 * PI)).powi(2) * sum.norm_sqr()).log10()
}

pub fn two_ray() -> Outcome {
    let lib = MaterialLibrary::builtin();
    let ground = lib.id_of("ground").unwrap();
    let scene = fixtures::ground_plane(5000.0, ground);
    let horizontal =
        AntennaPattern::grid(GridPattern::uniform(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), 1.0)).unwrap();
    let cfg = profiles::builtin("offline").unwrap().engine;
    let (ht, hr) = (10.0, 1.5);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for f in [2.4e9, 3.5e9, 6e9] {
        let eps = complex_permittivity(&lib[ground], f);
        for step in 0..50 {
            let d = 10.0 + 10.0 * step as f64;
            let tx = Endpoint::new(Vec3::new(0.0, 0.0, ht), horizontal.clone());
            let rx = Endpoint::new(Vec3::new(d, 0.0, hr), horizontal.clone());
            let r = simulate_link(&scene, &tx, &rx, f, &cfg, 0.0).unwrap();
            if r.paths.len() != 2 {
                return Outcome::new(false, format!("{} paths at d = {d} m, f = {f} Hz", r.paths.len()));
            }
            let sum: Complex64 = r.paths.iter().map(|p| p.amplitude).sum();
            worst = worst.max((10.0 * sum.norm_sqr().log10() - two_ray_oracle_db(ht, hr, d, eps, f)).abs());
            n += 1;
        }
    }
    Outcome::new(worst <= 0.1, format!("{n} links over 10-500 m at 2.4/3.5/6 GHz, default ground: max deviation {worst:.2e} dB (limit 0.1)"))
}
