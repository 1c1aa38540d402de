//! Shooting and bouncing rays.
//!
//! Rays leave the source on a Fibonacci lattice and spawn specular and
//! straight-through continuations at every hit, within the per-mechanism
//! bounds. A receiver captures a ray segment when the segment passes within
//! `rx_sphere_scale * gamma * L` of it, where `gamma` is the mean ray
//! spacing and `L` the unfolded length at the closest point. One ray tree
//! can serve many receivers through a uniform-grid index.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{EngineConfig, InteractionKind, PreparedScene, SigElem, Signature};
use crate::geometry::{inverse_dir, Aabb, Vec3};

/// Self-intersection guard for rays leaving a surface, meters.
pub const RAY_EPS: f64 = 1e-7;

/// `n` near-uniform unit vectors on the Fibonacci sphere lattice.
pub fn launch_directions(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Random rotation derived from the seed; the identity for seed 0.
fn seeded_rotation(seed: u64) -> Option<[Vec3; 3]> {
    if seed == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Uniform random unit quaternion.
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = 2.0 * std::f64::consts::PI;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos());
    Some([
        Vec3::new(1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)),
        Vec3::new(2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)),
        Vec3::new(2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)),
    ])
}

fn directions_for(cfg: &EngineConfig) -> Vec<Vec3> {
    let mut dirs = launch_directions(cfg.n_rays as usize);
    if let Some(r) = seeded_rotation(cfg.seed) {
        for d in &mut dirs {
            *d = Vec3::new(r[0].dot(*d), r[1].dot(*d), r[2].dot(*d));
        }
    }
    dirs
}

/// Uniform grid over receiver positions.
struct RxIndex<'a> {
    pts: &'a [Vec3],
    bounds: Aabb,
    cell: f64,
    dims: [usize; 3],
    cells: HashMap<usize, Vec<u32>>,
}

impl<'a> RxIndex<'a> {
    fn new(pts: &'a [Vec3]) -> Self {
        let bounds = Aabb::from_points(pts.iter().copied());
        let ext = bounds.extent();
        let n = pts.len().max(1) as f64;
        let span = ext.x.max(ext.y).max(ext.z);
        let mut cell = (span / n.sqrt()).max(0.05);
        let dims_for = |c: f64| [0, 1, 2].map(|a| (ext[a] / c).floor() as usize + 1);
        while dims_for(cell).iter().product::<usize>() > 8 * pts.len() + 8 {
            cell *= 1.5;
        }
        let dims = dims_for(cell);
        let mut cells: HashMap<usize, Vec<u32>> = HashMap::new();
        let mut idx = RxIndex { pts, bounds, cell, dims, cells: HashMap::new() };
        for (i, p) in pts.iter().enumerate() {
            let c = idx.coord(*p);
            cells.entry(idx.flat(c)).or_default().push(i as u32);
        }
        idx.cells = cells;
        idx
    }

    fn coord(&self, p: Vec3) -> [usize; 3] {
        [0, 1, 2].map(|a| (((p[a] - self.bounds.min[a]) / self.cell).floor().max(0.0) as usize).min(self.dims[a] - 1))
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Receivers in cells overlapping the box `center +- r`.
    fn visit(&self, center: Vec3, r: f64, mut f: impl FnMut(u32)) {
        let lo = self.coord(center - Vec3::new(r, r, r));
        let hi = self.coord(center + Vec3::new(r, r, r));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    if let Some(v) = self.cells.get(&self.flat([x, y, z])) {
                        v.iter().for_each(|&i| f(i));
                    }
                }
            }
        }
    }
}

struct Tracer<'a> {
    prep: &'a PreparedScene,
    cfg: &'a EngineConfig,
    gamma: f64,
    rx: &'a RxIndex<'a>,
}

impl Tracer<'_> {
    fn capture_radius(&self, unfolded: f64) -> f64 {
        self.cfg.rx_sphere_scale * self.gamma * unfolded
    }

    fn captures(&self, rx: Vec3, o: Vec3, d: Vec3, t_end: f64, l0: f64) -> bool {
        let t = (rx - o).dot(d).clamp(0.0, t_end);
        let dist = (o + d * t).distance(rx);
        dist <= self.capture_radius(l0 + t)
    }

    fn capture(&self, o: Vec3, d: Vec3, t_end: f64, l0: f64, sig: &[SigElem], out: &mut Vec<(u32, Signature)>) {
        let pts = self.rx.pts;
        if pts.len() == 1 {
            if self.captures(pts[0], o, d, t_end, l0) {
                out.push((0, sig.to_vec()));
            }
            return;
        }
        let b = self.rx.bounds;
        let far = (0..8)
            .map(|k| {
                let pick = |bit: usize, a: usize| if k & bit == 0 { b.min[a] } else { b.max[a] };
                Vec3::new(pick(1, 0), pick(2, 1), pick(4, 2)).distance(o)
            })
            .fold(0.0, f64::max);
        let t_lim = t_end.min(far);
        let r_b = self.capture_radius(l0 + t_lim);
        let Some((ta, tb)) = b.inflate(r_b).clip_ray(o, inverse_dir(d), 0.0, t_lim) else {
            return;
        };
        let step = self.rx.cell;
        let reach = r_b + 0.5 * step;
        let mut seen: Vec<u32> = Vec::new();
        let mut t = ta;
        loop {
            let p = o + d * t.min(tb);
            self.rx.visit(p, reach, |i| {
                if !seen.contains(&i) {
                    seen.push(i);
                    if self.captures(pts[i as usize], o, d, t_end, l0) {
                        out.push((i, sig.to_vec()));
                    }
                }
            });
            if t >= tb {
                break;
            }
            t += step;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn trace(&self, o: Vec3, d: Vec3, l0: f64, sig: &mut Vec<SigElem>, nr: u32, nt: u32, out: &mut Vec<(u32, Signature)>) {
        let hit = self.prep.bvh.intersect(o, d, RAY_EPS, f64::INFINITY);
        let t_end = hit.map_or(f64::INFINITY, |h| h.distance);
        self.capture(o, d, t_end, l0, sig, out);
        let Some(h) = hit else { return };
        if sig.len() as u32 >= self.cfg.max_order {
            return;
        }
        let l1 = l0 + h.distance;
        if nr < self.cfg.max_reflections {
            sig.push(SigElem::new(InteractionKind::Reflection, h.triangle_id));
            self.trace(h.point, d.reflect(h.normal).normalized(), l1, sig, nr + 1, nt, out);
            sig.pop();
        }
        if nt < self.cfg.max_transmissions {
            sig.push(SigElem::new(InteractionKind::Transmission, h.triangle_id));
            self.trace(h.point, d, l1, sig, nr, nt + 1, out);
            sig.pop();
        }
    }
}

/// Candidate signatures for every receiver from one ray tree rooted at
/// `source`. Each list is sorted and duplicate-free.
pub fn trace_candidates(prep: &PreparedScene, source: Vec3, receivers: &[Vec3], cfg: &EngineConfig) -> Vec<Vec<Signature>> {
    if receivers.is_empty() {
        return Vec::new();
    }
    let index = RxIndex::new(receivers);
    let tracer = Tracer { prep, cfg, gamma: cfg.ray_spacing(), rx: &index };
    let dirs = directions_for(cfg);
    let chunk = 256;
    let mut hits: Vec<(u32, Signature)> = dirs
        .par_chunks(chunk)
        .map(|ds| {
            let mut out = Vec::new();
            let mut sig = Vec::with_capacity(cfg.max_order as usize + 1);
            for &d in ds {
                tracer.trace(source, d, 0.0, &mut sig, 0, 0, &mut out);
            }
            out.sort_unstable();
            out.dedup();
            out
        })
        .reduce(Vec::new, |mut a, b| {
            a.extend(b);
            a
        });
    hits.sort_unstable();
    hits.dedup();
    let mut per_rx = vec![Vec::new(); receivers.len()];
    for (i, s) in hits {
        per_rx[i as usize].push(s);
    }
    per_rx
}

/// Candidate interaction signatures (tx-to-rx order) for a single link.
pub fn trace_sbr(prep: &PreparedScene, tx: Vec3, rx: Vec3, cfg: &EngineConfig) -> Vec<Signature> {
    trace_candidates(prep, tx, &[rx], cfg).pop().unwrap_or_default()
}
