use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raytwin::materials::{fresnel_from_permittivity, slab_transmission, Material};

use crate::Outcome;

/// Transmitted power fractions of a lossless dielectric half-space for
/// perpendicular and parallel polarisation, from the transmitted field
/// coefficients.
fn transmitted_fractions(eps: f64, cos_i: f64) -> (f64, f64) {
    let sin2 = 1.0 - cos_i * cos_i;
    let cos_t = (1.0 - sin2 / eps).sqrt();
    let n = eps.sqrt();
    let t_perp = 2.0 * cos_i / (cos_i + n * cos_t);
    let t_par = 2.0 * cos_i / (n * cos_i + cos_t);
    let ratio = n * cos_t / cos_i;
    (ratio * t_perp * t_perp, ratio * t_par * t_par)
}

pub fn suite() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // Normal incidence on eps = 4: both coefficients have magnitude 1/3.
    let (rs, rp) = fresnel_from_permittivity(Complex64::new(4.0, 0.0), 1.0);
    let normal = ((rs.norm() - 1.0 / 3.0).abs()).max((rp.norm() - 1.0 / 3.0).abs());
    pass &= normal < 1e-12;

    // Brewster angle: the parallel coefficient vanishes at tan = sqrt(eps).
    let mut brewster: f64 = 0.0;
    for eps in [2.0, 4.0, 9.0, 25.0] {
        let theta_b = f64::atan(f64::sqrt(eps));
        let (_, rp) = fresnel_from_permittivity(Complex64::new(eps, 0.0), theta_b.cos());
        brewster = brewster.max(rp.norm());
    }
    pass &= brewster < 1e-12;
    notes.push(format!("|r_par| at Brewster {brewster:.1e}"));

    // Grazing incidence: both reflections tend to magnitude one.
    let mut grazing: f64 = 0.0;
    for eps in [Complex64::new(3.0, 0.0), Complex64::new(13.0, -1.4), Complex64::new(5.0, -20.0)] {
        let (rs, rp) = fresnel_from_permittivity(eps, 1e-9);
        grazing = grazing.max((rs.norm() - 1.0).abs()).max((rp.norm() - 1.0).abs());
    }
    pass &= grazing < 1e-6;
    notes.push(format!("grazing | |r| - 1 | {grazing:.1e}"));

    // Lossless energy split: |r|^2 + T = 1.
    let mut split: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let eps = rng.random_range(1.0..80.0);
        let c = rng.random_range(0.01..1.0);
        let (rs, rp) = fresnel_from_permittivity(Complex64::new(eps, 0.0), c);
        let (ts, tp) = transmitted_fractions(eps, c);
        split = split.max((rs.norm_sqr() + ts - 1.0).abs()).max((rp.norm_sqr() + tp - 1.0).abs());
    }
    pass &= split < 1e-9;
    notes.push(format!("lossless |r|^2 + T - 1 max {split:.1e}"));

    // Passivity over random lossy materials, angles and frequencies.
    let mut excess: f64 = 0.0;
    for _ in 0..10_000 {
        let m = Material::new(
            "sample",
            rng.random_range(1.0..80.0),
            10f64.powf(rng.random_range(-4.0..2.0)),
            rng.random_range(0.001..0.5),
        );
        let f = 10f64.powf(rng.random_range(8.5..11.0));
        let c = rng.random_range(0.0..=1.0);
        let eps = raytwin::materials::complex_permittivity(&m, f);
        let (rs, rp) = fresnel_from_permittivity(eps, c);
        let (ts, tp) = slab_transmission(&m, c, f);
        excess = [rs, rp, ts, tp].iter().fold(excess, |e, x| e.max(x.norm() - 1.0));
    }
    pass &= excess <= 1e-12;
    notes.push(format!("10000 lossy samples, max(|r|, |t|) - 1 = {excess:.1e}"));

    Outcome::new(pass, notes.join("; "))
}
