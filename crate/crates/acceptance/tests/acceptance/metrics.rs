use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raytwin::channel::{angular_spread, rms_delay_spread, similarity_index, Mpc, Side, SimilarityGates};

use crate::Outcome;

fn mpc(delay_s: f64, power_db: f64, aoa_az_deg: f64) -> Mpc {
    Mpc {
        delay_s,
        power_db,
        phase_rad: 0.0,
        aod_az_deg: -aoa_az_deg,
        aod_el_deg: 0.0,
        aoa_az_deg,
        aoa_el_deg: 0.0,
        doppler_hz: 0.0,
        signature: vec![],
    }
}

/// Power-weighted second central moment of delay.
fn delay_spread_oracle(m: &[Mpc]) -> f64 {
    let w: Vec<f64> = m.iter().map(|x| 10f64.powf(x.power_db / 10.0)).collect();
    let total: f64 = w.iter().sum();
    let mean: f64 = m.iter().zip(&w).map(|(x, w)| w * x.delay_s).sum::<f64>() / total;
    let second: f64 = m.iter().zip(&w).map(|(x, w)| w * x.delay_s * x.delay_s).sum::<f64>() / total;
    (second - mean * mean).max(0.0).sqrt()
}

fn random_mpcs(rng: &mut ChaCha8Rng) -> Vec<Mpc> {
    let n = rng.random_range(2..30);
    (0..n)
        .map(|_| mpc(rng.random_range(1e-7..2e-6), rng.random_range(-140.0..-60.0), rng.random_range(-180.0..180.0)))
        .collect()
}

pub fn correctness() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let two = [mpc(100e-9, -80.0, 0.0), mpc(200e-9, -80.0, 90.0)];
    let ds = rms_delay_spread(&two);
    pass &= (ds - 50e-9).abs() < 1e-15;
    notes.push(format!("two equal paths 100 ns apart: DS = {:.6} ns", ds * 1e9));

    let g = SimilarityGates::default();
    let a = [mpc(100e-9, -80.0, 10.0), mpc(300e-9, -80.0, 120.0)];
    let far = [mpc(700e-9, -80.0, 10.0), mpc(900e-9, -80.0, 120.0)];
    let half = [a[0].clone(), mpc(900e-9, -80.0, 120.0)];
    let (same, none, mid) = (similarity_index(&a, &a, &g), similarity_index(&a, &far, &g), similarity_index(&a, &half, &g));
    pass &= (same - 100.0).abs() < 1e-9 && none == 0.0 && (mid - 50.0).abs() < 1e-9;
    notes.push(format!("SI identical/disjoint/half = {same:.1}/{none:.1}/{mid:.1} %"));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut ds_err, mut shift_err, mut scale_err, mut as_err): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let m = random_mpcs(&mut rng);
        let ds = rms_delay_spread(&m);
        ds_err = ds_err.max((ds - delay_spread_oracle(&m)).abs() / ds.max(1e-12));
        let dt = rng.random_range(-5e-8..1e-6);
        let shifted: Vec<Mpc> = m.iter().map(|x| Mpc { delay_s: x.delay_s + dt, ..x.clone() }).collect();
        shift_err = shift_err.max((rms_delay_spread(&shifted) - ds).abs() / ds.max(1e-12));
        let dp = rng.random_range(-40.0..40.0);
        let scaled: Vec<Mpc> = m.iter().map(|x| Mpc { power_db: x.power_db + dp, ..x.clone() }).collect();
        scale_err = scale_err.max((rms_delay_spread(&scaled) - ds).abs() / ds.max(1e-12));
        let rot = rng.random_range(-360.0..360.0);
        let turned: Vec<Mpc> = m.iter().map(|x| Mpc { aoa_az_deg: x.aoa_az_deg + rot, ..x.clone() }).collect();
        as_err = as_err.max((angular_spread(&turned, Side::Arrival) - angular_spread(&m, Side::Arrival)).abs());
    }
    pass &= ds_err < 1e-6 && shift_err < 1e-6 && scale_err < 1e-9 && as_err < 1e-4;
    notes.push(format!(
        "1000 random sets: DS vs moment oracle {ds_err:.1e}, delay shift {shift_err:.1e}, power scale {scale_err:.1e} (relative); AS under rotation {as_err:.1e} deg"
    ));
    Outcome::new(pass, notes.join("; "))
}
