use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::antenna::GridPattern;
use crate::fixtures;
use crate::materials::{complex_permittivity, Material};

fn cfg(n_rays: u32, order: u32) -> EngineConfig {
    EngineConfig {
        n_rays,
        max_order: order,
        max_reflections: order,
        max_transmissions: 0,
        max_diffractions: 0,
        max_scatterings: 0,
        rel_power_floor_db: -200.0,
        ..EngineConfig::default()
    }
}

fn fspl_db(d: f64, f: f64) -> f64 {
    20.0 * (4.0 * PI * d * f / SPEED_OF_LIGHT).log10()
}

#[test]
fn friis_free_space() {
    let scene = fixtures::free_space();
    for (d, f, hand) in [(100.0, 6e9, 88.01), (1000.0, 14.8e9, 115.86)] {
        let r = simulate_link(&scene, &Endpoint::isotropic(Vec3::ZERO), &Endpoint::isotropic(Vec3::new(d, 0.0, 0.0)), f, &cfg(1024, 1), 0.0)
            .unwrap();
        assert_eq!(r.paths.len(), 1);
        let pl = -r.paths[0].power_db();
        assert!((pl - fspl_db(d, f)).abs() < 1e-9);
        assert!((pl - hand).abs() < 0.01, "{pl}");
        assert!((r.paths[0].delay_s - d / SPEED_OF_LIGHT).abs() < 1e-18);
    }
}

fn horizontal() -> AntennaPattern {
    AntennaPattern::grid(GridPattern::uniform(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), 1.0)).unwrap()
}

/// Coherent two-ray power for a horizontally polarised link over a flat
/// half-space.
fn two_ray_oracle(ht: f64, hr: f64, d: f64, eps: Complex64, f: f64) -> f64 {
    let k = 2.0 * PI * f / SPEED_OF_LIGHT;
    let d1 = (d * d + (ht - hr).powi(2)).sqrt();
    let d2 = (d * d + (ht + hr).powi(2)).sqrt();
    let sin = (ht + hr) / d2;
    let root = (eps - (1.0 - sin * sin)).sqrt();
    let gamma = (sin - root) / (sin + root);
    let lambda = SPEED_OF_LIGHT / f;
    let sum = Complex64::from_polar(1.0 / d1, -k * d1) + gamma * Complex64::from_polar(1.0 / d2, -k * d2);
    (lambda / (4.0 * PI)).powi(2) * sum.norm_sqr()
}

#[test]
fn two_ray_matches_closed_form() {
    let f = 2.4e9;
    for m in [Material::new("metal", 1.0, 1e7, 0.01), Material::new("dry", 15.0, 0.01, 0.3)] {
        let eps = complex_permittivity(&m, f);
        let scene = fixtures::ground_plane_with(2000.0, m);
        for d in [10.0, 37.0, 120.0, 500.0] {
            let tx = Endpoint::new(Vec3::new(0.0, 0.0, 10.0), horizontal());
            let rx = Endpoint::new(Vec3::new(d, 0.0, 1.5), horizontal());
            let r = simulate_link(&scene, &tx, &rx, f, &cfg(1 << 14, 1), 0.0).unwrap();
            assert_eq!(r.paths.len(), 2, "d={d}");
            let sum: Complex64 = r.paths.iter().map(|p| p.amplitude).sum();
            let oracle = two_ray_oracle(10.0, 1.5, d, eps, f);
            let err = (10.0 * (sum.norm_sqr() / oracle).log10()).abs();
            assert!(err < 0.01, "d={d}: {err} dB");
        }
    }
}

#[test]
fn specular_law_holds() {
    let case = fixtures::random_room(3);
    let prep = PreparedScene::new(&case.scene, 0.0);
    let geo = link_geometry(&prep, case.tx, case.rx, &cfg(1 << 14, 2), &scatter_mask(&case.scene.materials));
    for p in &geo.paths {
        let mut pts = vec![geo.start()];
        pts.extend(p.iter().map(|i| i.point));
        pts.push(geo.end());
        for (k, it) in p.iter().enumerate() {
            let n = prep.bvh.triangle(it.surface_id).normal;
            let (a, b) = ((pts[k] - pts[k + 1]).normalized(), (pts[k + 2] - pts[k + 1]).normalized());
            assert!((a.dot(n) - b.dot(n)).abs() < 1e-9);
            assert!((a + b).cross(n).norm() < 1e-9 * (a + b).norm().max(1.0));
        }
    }
}

fn signatures(r: &ChannelRealization) -> BTreeSet<Signature> {
    r.paths.iter().map(|p| p.signature()).collect()
}

#[test]
fn reciprocity_with_all_mechanisms() {
    let campus = fixtures::campus();
    let mut c = cfg(1 << 14, 3);
    c.max_transmissions = 1;
    c.max_diffractions = 1;
    c.bidirectional = true;
    let a = Endpoint::new(campus.tx, AntennaPattern::vertical_dipole());
    let b = Endpoint::new(Vec3::new(35.0, 12.0, 1.5), AntennaPattern::vertical_dipole());
    let ab = simulate_link(&campus.scene, &a, &b, 3.5e9, &c, 0.0).unwrap();
    let ba = simulate_link(&campus.scene, &b, &a, 3.5e9, &c, 0.0).unwrap();
    assert!(!ab.paths.is_empty());
    let rev: BTreeSet<Signature> = signatures(&ba).iter().map(|s| reverse_signature(s)).collect();
    assert_eq!(signatures(&ab), rev);
    let pa: f64 = ab.total_power();
    let pb: f64 = ba.total_power();
    assert!((10.0 * (pa / pb).log10()).abs() < 1e-9);
    for p in &ab.paths {
        let q = ba.paths.iter().find(|q| reverse_signature(&q.signature()) == p.signature()).unwrap();
        assert!((p.amplitude - q.amplitude).norm() <= 1e-9 * p.amplitude.norm());
    }
}

#[test]
fn deterministic_output() {
    let case = fixtures::random_room(11);
    let mut c = cfg(1 << 13, 3);
    c.seed = 42;
    let tx = Endpoint::isotropic(case.tx);
    let rx = Endpoint::isotropic(case.rx);
    let a = simulate_link(&case.scene, &tx, &rx, 5e9, &c, 0.0).unwrap();
    let b = simulate_link(&case.scene, &tx, &rx, 5e9, &c, 0.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sbr_recall_in_rooms() {
    let mut found = 0;
    let mut total = 0;
    for seed in 0..3 {
        let case = fixtures::random_room(seed);
        let prep = PreparedScene::new(&case.scene, 0.0);
        let reference: BTreeSet<Signature> =
            enumerate_images(&prep, case.tx, case.rx, 2).unwrap().iter().map(|p| signature_of(p)).collect();
        let geo = link_geometry(&prep, case.tx, case.rx, &cfg(1 << 16, 2), &[]);
        let got: BTreeSet<Signature> = geo
            .paths
            .iter()
            .map(|p| if geo.swapped { signature_of(p).into_iter().rev().collect() } else { signature_of(p) })
            .collect();
        total += reference.len();
        found += reference.iter().filter(|s| got.contains(*s)).count();
        // Every refined SBR path is a genuine image path.
        assert!(got.is_subset(&reference));
    }
    assert!(found as f64 >= 0.95 * total as f64, "{found}/{total}");
}

#[test]
fn doppler_from_path_rate() {
    let scene = fixtures::ground_plane(1000.0, 0);
    let c = cfg(1 << 12, 1);
    let f = 3e9;
    let tx = Endpoint::isotropic(Vec3::new(0.0, 0.0, 10.0));
    let r_at = |x: f64| simulate_link(&scene, &tx, &Endpoint::isotropic(Vec3::new(x, 0.0, 2.0)), f, &c, 0.0).unwrap();
    let mut r0 = r_at(100.0);
    let r1 = r_at(100.01);
    assert_eq!(doppler_annotate(&mut r0, &r1, 0.001), 2);
    // Receiver moving away at 10 m/s along the LoS: about -f v / c.
    let los = r0.paths.iter().find(|p| p.interactions.is_empty()).unwrap();
    let expected = -f / SPEED_OF_LIGHT * 10.0 * (100.0 / (100f64.powi(2) + 64.0).sqrt());
    assert!((los.doppler_hz - expected).abs() < 0.05, "{} {expected}", los.doppler_hz);
}

#[test]
fn receding_doppler_hand_value() {
    let scene = fixtures::free_space();
    let c = cfg(64, 0);
    let tx = Endpoint::isotropic(Vec3::ZERO);
    let r_at = |x: f64| simulate_link(&scene, &tx, &Endpoint::isotropic(Vec3::new(x, 0.0, 0.0)), 6e9, &c, 0.0).unwrap();
    let mut r0 = r_at(50.0);
    doppler_annotate(&mut r0, &r_at(50.1), 0.01);
    assert!((r0.paths[0].doppler_hz + 200.7).abs() < 0.01 * 200.7, "{}", r0.paths[0].doppler_hz);
    let mut still = r_at(50.0);
    doppler_annotate(&mut still, &r_at(50.0), 0.01);
    assert_eq!(still.paths[0].doppler_hz, 0.0);
}

#[test]
fn v2v_los_doppler_changes_sign_at_closest_approach() {
    use fixtures::v2v;
    let scene = fixtures::v2v_scene();
    let c = cfg(1 << 10, 1);
    let offset = Vec3::new(0.0, 0.0, v2v::ANTENNA_HEIGHT);
    let tx = Endpoint::attached(0, offset, AntennaPattern::isotropic());
    let rx = Endpoint::attached(1, offset, AntennaPattern::isotropic());
    let los_doppler = |t: f64| {
        let mut r0 = simulate_link(&scene, &tx, &rx, 6e9, &c, t).unwrap();
        let r1 = simulate_link(&scene, &tx, &rx, 6e9, &c, t + 0.01).unwrap();
        doppler_annotate(&mut r0, &r1, 0.01);
        r0.paths.iter().find(|p| p.interactions.is_empty()).expect("LoS").doppler_hz
    };
    assert!(los_doppler(4.5) > 0.0);
    assert!(los_doppler(7.0) < 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn floor_monotone(seed in 0u64..50, a in -60.0f64..-5.0, b in -60.0f64..-5.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let case = fixtures::random_room(seed);
        let prep = PreparedScene::new(&case.scene, 0.0);
        let geo = link_geometry(&prep, case.tx, case.rx, &cfg(1 << 12, 2), &[]);
        let ant = AntennaPattern::isotropic();
        let r_lo = evaluate_link(&prep, &case.scene.materials, &geo, &ant, &ant, 5e9, lo);
        let r_hi = evaluate_link(&prep, &case.scene.materials, &geo, &ant, &ant, 5e9, hi);
        let s_lo = signatures(&r_lo);
        prop_assert!(signatures(&r_hi).is_subset(&s_lo));
    }

    #[test]
    fn reciprocal_in_random_rooms(seed in 0u64..1000) {
        let case = fixtures::random_room(seed);
        let mut c = cfg(1 << 12, 2);
        c.bidirectional = true;
        c.max_transmissions = 1;
        let (a, b) = (Endpoint::isotropic(case.tx), Endpoint::isotropic(case.rx));
        let ab = simulate_link(&case.scene, &a, &b, 5e9, &c, 0.0).unwrap();
        let ba = simulate_link(&case.scene, &b, &a, 5e9, &c, 0.0).unwrap();
        let diff = 10.0 * (ab.total_power() / ba.total_power()).log10();
        prop_assert!(diff.abs() < 1e-9);
    }
}
