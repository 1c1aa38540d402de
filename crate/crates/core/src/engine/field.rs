//! Polarimetric field transport along a geometric path.

use std::f64::consts::PI;
use std::ops::{Add, Mul};

use num_complex::Complex64;

use super::diffraction::diffraction_dyad;
use super::scattering::tile_area;
use super::{Interaction, InteractionKind, Jones, PreparedScene};
use crate::antenna::spherical_basis;
use crate::geometry::Vec3;
use crate::materials::{fresnel_coefficients, ray_slab_transmission, scattering_amplitude, MaterialLibrary};
use crate::SPEED_OF_LIGHT;

/// Complex 3x3 matrix acting on field vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[Complex64; 3]; 3]);

impl Mat3 {
    pub fn zero() -> Self {
        Mat3([[Complex64::new(0.0, 0.0); 3]; 3])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.0[i][i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// `s * a b^T`.
    pub fn outer(a: Vec3, b: Vec3, s: Complex64) -> Self {
        let (a, b) = (a.to_array(), b.to_array());
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = s * (a[i] * b[j]);
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[j][i];
            }
        }
        m
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|x| *x *= s);
        m
    }

    /// `a^T M b` for real vectors.
    pub fn bilinear(&self, a: Vec3, b: Vec3) -> Complex64 {
        let (a, b) = (a.to_array(), b.to_array());
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                s += self.0[i][j] * (a[i] * b[j]);
            }
        }
        s
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(mut self, o: Mat3) -> Mat3 {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] += o.0[i][j];
            }
        }
        self
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut m = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    m.0[i][j] += self.0[i][k] * o.0[k][j];
                }
            }
        }
        m
    }
}

/// Field transfer of a path in its own direction of travel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldResult {
    /// Maps the departing field vector to the arriving one, including
    /// the propagation phase.
    pub dyad: Mat3,
    pub spreading: f64,
    pub length: f64,
    /// Unit direction of the first leg.
    pub k_first: Vec3,
    /// Unit propagation direction of the last leg.
    pub k_last: Vec3,
}

/// Perpendicular-polarisation unit vector for incidence `k` on normal `n`.
fn s_hat(k: Vec3, n: Vec3) -> Vec3 {
    let s = k.cross(n);
    if s.norm() < 1e-12 {
        k.any_perpendicular().normalized()
    } else {
        s.normalized()
    }
}

fn specular_dyad(k_in: Vec3, k_out: Vec3, n: Vec3, rs: Complex64, rp: Complex64) -> Mat3 {
    let s = s_hat(k_in, n);
    Mat3::outer(s, s, rs) + Mat3::outer(s.cross(k_out), s.cross(k_in), rp)
}

/// Field transfer along `start -> path -> end`.
pub fn compute_field(
    start: Vec3,
    end: Vec3,
    path: &[Interaction],
    prep: &PreparedScene,
    lib: &MaterialLibrary,
    f: f64,
    tile_size_m: f64,
) -> FieldResult {
    let k = 2.0 * PI * f / SPEED_OF_LIGHT;
    let mut pts = Vec::with_capacity(path.len() + 2);
    pts.push(start);
    pts.extend(path.iter().map(|i| i.point));
    pts.push(end);
    let length: f64 = pts.windows(2).map(|w| w[0].distance(w[1])).sum();
    let dir = |i: usize| (pts[i + 1] - pts[i]).normalized();
    let mut dyad = Mat3::identity();
    let mut spreading = 1.0 / length;
    for (idx, it) in path.iter().enumerate() {
        let (k_in, k_out) = (dir(idx), dir(idx + 1));
        let (prev, next) = (pts[idx], pts[idx + 2]);
        let m = &lib[it.material_id];
        let step = match it.kind {
            InteractionKind::Reflection => {
                let n = prep.bvh.triangle(it.surface_id).normal;
                let (rs, rp) = fresnel_coefficients(m, k_in.dot(n).abs(), f);
                specular_dyad(k_in, k_out, n, rs, rp)
            }
            InteractionKind::Transmission => {
                let n = prep.bvh.triangle(it.surface_id).normal;
                let (ts, tp) = ray_slab_transmission(m, k_in.dot(n).abs(), f);
                specular_dyad(k_in, k_out, n, ts, tp)
            }
            InteractionKind::Diffraction => {
                let edge = &prep.edges[it.surface_id as usize];
                let (sp, s) = (prev.distance(it.point), it.point.distance(next));
                spreading = 1.0 / (s * sp * (s + sp)).sqrt();
                diffraction_dyad(edge, prev, it.point, next, m, k, f)
            }
            InteractionKind::Scattering => {
                let tri = prep.bvh.triangle(it.surface_id);
                let n = tri.normal;
                let (di, ds) = (prev.distance(it.point), it.point.distance(next));
                let cos = k_in.dot(n).abs().min(k_out.dot(n).abs());
                let area = tile_area(prep, it.surface_id, tile_size_m);
                spreading = (area * cos).sqrt() / (di * ds);
                let a = scattering_amplitude(m, k_in, k_out, n).min(scattering_amplitude(m, -k_out, -k_in, n));
                let proj = |d: Vec3| Mat3::identity() + Mat3::outer(d, d, Complex64::new(-1.0, 0.0));
                (proj(k_out) * proj(k_in)).scale(Complex64::new(a, 0.0))
            }
        };
        dyad = step * dyad;
    }
    let dyad = dyad.scale(Complex64::from_polar(1.0, -k * length));
    FieldResult { dyad, spreading, length, k_first: dir(0), k_last: dir(pts.len() - 2) }
}

/// Jones matrix in the spherical bases of the departure direction
/// (columns) and of the arrival look direction (rows).
pub fn jones(dyad: &Mat3, k_dep: Vec3, look: Vec3) -> Jones {
    let (tt, tp) = spherical_basis(k_dep);
    let (rt, rp) = spherical_basis(look);
    let (tb, rb) = ([tt, tp], [rt, rp]);
    let mut j = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (i, r) in rb.iter().enumerate() {
        for (c, t) in tb.iter().enumerate() {
            j[i][c] = dyad.bilinear(*r, *t);
        }
    }
    j
}
