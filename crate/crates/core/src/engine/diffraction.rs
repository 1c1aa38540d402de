//! Single edge diffraction with Kouyoumjian–Pathak UTD coefficients and
//! Luebbers' heuristic face reflection factors for lossy wedges.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::field::Mat3;
use super::refine::OCCLUSION_MARGIN;
use super::{Interaction, InteractionKind, PreparedScene};
use crate::geometry::Vec3;
use crate::materials::{fresnel_coefficients, Material};
use crate::scene::DiffractionEdge;

/// Boundary argument below which the cot * F product uses its limit form.
const BOUNDARY_EPS: f64 = 1e-6;

/// UTD transition function `F(X) = 2j sqrt(X) e^{jX} int_{sqrt X}^inf e^{-j t^2} dt`
/// for `X >= 0`.
///
/// Evaluated from the complementary error function of `sqrt(X) e^{j pi/4}`:
/// a power series below `sqrt(X) = 2.5` and Laplace's continued fraction
/// above, both accurate to better than 1e-10.
pub fn transition_function(x: f64) -> Complex64 {
    let x = x.max(0.0);
    let u = x.sqrt();
    let j = Complex64::i();
    if u < 2.5 {
        // int_u^inf = sqrt(pi)/2 e^{-j pi/4} - sum (-j)^n u^{2n+1} / (n! (2n+1))
        let mut term = Complex64::new(u, 0.0); // (-j)^n u^{2n+1} / n!
        let mut partial = Complex64::new(0.0, 0.0);
        for n in 0..200 {
            let add = term / (2 * n + 1) as f64;
            partial += add;
            if add.norm() < 1e-17 * partial.norm().max(1e-300) {
                break;
            }
            term = term * (-j) * (u * u) / (n + 1) as f64;
        }
        let tail = Complex64::from_polar(0.5 * PI.sqrt(), -PI / 4.0) - partial;
        2.0 * j * u * Complex64::from_polar(1.0, x) * tail
    } else {
        // erfc(w) = e^{-w^2}/sqrt(pi) * 1/(w + (1/2)/(w + 1/(w + (3/2)/(w + ...))))
        let w = Complex64::from_polar(u, PI / 4.0);
        let depth = 300;
        let mut t = w;
        for k in (1..=depth).rev() {
            t = w + (k as f64 * 0.5) / t;
        }
        j * u * Complex64::from_polar(1.0, -PI / 4.0) / t
    }
}

/// `cot((pi + s*beta)/(2n)) * F(kL a_s(beta))` with `s = +1/-1`.
fn cot_f(n: f64, beta: f64, s: f64, kl: f64) -> Complex64 {
    // N is the integer nearest to satisfying 2 pi n N - beta = s pi.
    let big_n = ((beta + s * PI) / (2.0 * PI * n)).round();
    let eps = PI + s * beta - s * 2.0 * PI * n * big_n;
    if eps.abs() < BOUNDARY_EPS {
        let e = Complex64::from_polar(1.0, PI / 4.0);
        let sgn = if eps >= 0.0 { 1.0 } else { -1.0 };
        return n * ((2.0 * PI * kl).sqrt() * sgn - 2.0 * kl * eps * e) * e;
    }
    let a = 2.0 * ((2.0 * PI * n * big_n - beta) / 2.0).cos().powi(2);
    let cot = 1.0 / ((PI + s * beta) / (2.0 * n)).tan();
    cot * transition_function(kl * a)
}

/// Soft and hard UTD coefficients `(D_s, D_h)`.
///
/// `phi`, `phi_p` are observation and source angles measured from face 0
/// through the exterior, `n` the wedge parameter (exterior angle `n pi`),
/// `beta0` the edge-cone angle, `k` the wavenumber and `l` the distance
/// parameter. `r0`, `rn` hold `(soft, hard)` reflection factors for face 0
/// and face n (-1 and +1 for a perfect conductor).
#[allow(clippy::too_many_arguments)]
pub fn utd_coefficients(
    n: f64,
    phi: f64,
    phi_p: f64,
    beta0: f64,
    k: f64,
    l: f64,
    r0: (Complex64, Complex64),
    rn: (Complex64, Complex64),
) -> (Complex64, Complex64) {
    let kl = k * l;
    let t1 = cot_f(n, phi - phi_p, 1.0, kl);
    let t2 = cot_f(n, phi - phi_p, -1.0, kl);
    let t3 = cot_f(n, phi + phi_p, -1.0, kl);
    let t4 = cot_f(n, phi + phi_p, 1.0, kl);
    let pre = -Complex64::from_polar(1.0, -PI / 4.0) / (2.0 * n * (2.0 * PI * k).sqrt() * beta0.sin());
    let ds = pre * (t1 + t2 + r0.0 * t3 + rn.0 * t4);
    let dh = pre * (t1 + t2 + r0.1 * t3 + rn.1 * t4);
    (ds, dh)
}

/// Diffraction point on the edge for a source/observer pair: the point
/// where the unfolded path is straight. `None` when it falls outside the
/// edge segment.
pub fn diffraction_point(edge: &DiffractionEdge, src: Vec3, dst: Vec3) -> Option<Vec3> {
    let e = edge.direction();
    let p0 = edge.endpoints[0];
    let len = edge.length();
    let (a, b) = ((src - p0).dot(e), (dst - p0).dot(e));
    let r1 = ((src - p0) - e * a).norm();
    let r2 = ((dst - p0) - e * b).norm();
    if r1 < 1e-9 || r2 < 1e-9 {
        return None;
    }
    let s = a + (b - a) * r1 / (r1 + r2);
    let guard = 1e-9 * len.max(1.0);
    (s > guard && s < len - guard).then(|| p0 + e * s)
}

/// Geometric diffraction paths over all convex edges of the scene.
pub fn diffraction_paths(prep: &PreparedScene, src: Vec3, dst: Vec3) -> Vec<Vec<Interaction>> {
    let mut out = Vec::new();
    for (id, edge) in prep.edges.iter().enumerate() {
        let n = edge.wedge_n();
        if n <= 1.0 + 1e-9 {
            continue;
        }
        let limit = n * PI;
        let (phi_p, phi) = (edge.exterior_angle(src), edge.exterior_angle(dst));
        let inside = |a: f64| a > 1e-9 && a < limit - 1e-9;
        if !inside(phi_p) || !inside(phi) {
            continue;
        }
        let Some(q) = diffraction_point(edge, src, dst) else { continue };
        if prep.bvh.occluded(src, q, OCCLUSION_MARGIN) || prep.bvh.occluded(q, dst, OCCLUSION_MARGIN) {
            continue;
        }
        out.push(vec![Interaction {
            kind: InteractionKind::Diffraction,
            point: q,
            surface_id: id as u32,
            sub: 0,
            material_id: edge.material_id,
        }]);
    }
    out
}

/// Global-frame UTD dyad for incidence along `s_in` (towards the edge)
/// and diffraction along `s_out`, with source and observation distances.
#[allow(clippy::too_many_arguments)]
pub fn diffraction_dyad(
    edge: &DiffractionEdge,
    src: Vec3,
    q: Vec3,
    dst: Vec3,
    material: &Material,
    k: f64,
    f: f64,
) -> Mat3 {
    let e = edge.direction();
    let s_in = (q - src).normalized();
    let s_out = (dst - q).normalized();
    let (sp, s) = (src.distance(q), q.distance(dst));
    let beta0 = s_in.dot(e).clamp(-1.0, 1.0).acos();
    let n = edge.wedge_n();
    let (phi_p, phi) = (edge.exterior_angle(src), edge.exterior_angle(dst));
    let l = s * sp * beta0.sin().powi(2) / (s + sp);
    // Face reflection factors at the grazing angles phi' (face 0) and
    // n pi - phi (face n).
    let refl = |graze: f64| {
        let (rs, rh) = fresnel_coefficients(material, graze.sin().abs().min(1.0), f);
        (rs, rh)
    };
    let (ds, dh) = utd_coefficients(n, phi, phi_p, beta0, k, l, refl(phi_p), refl(n * PI - phi));
    let phi_hat_p = -(e.cross(s_in)).normalized();
    let beta_hat_p = s_in.cross(phi_hat_p);
    let phi_hat = e.cross(s_out).normalized();
    let beta_hat = s_out.cross(phi_hat);
    Mat3::outer(beta_hat, beta_hat_p, -ds) + Mat3::outer(phi_hat, phi_hat_p, -dh)
}
