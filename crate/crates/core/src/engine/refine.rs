//! Exact geometry for reflection/transmission signatures.
//!
//! Reflection points come from chained mirror images of the source across
//! the reflecting planes; transmission points from intersecting the
//! resulting straight segments with the crossed planes.

use super::{Interaction, InteractionKind, PreparedScene, SigElem};
use crate::geometry::Vec3;

/// Clearance kept from interaction points in occlusion checks, meters.
pub const OCCLUSION_MARGIN: f64 = 1e-6;

/// Intersection parameter of segment `a -> b` with the plane, if the
/// segment crosses it strictly inside.
fn cross_plane(a: Vec3, b: Vec3, n: Vec3, off: f64) -> Option<f64> {
    let da = n.dot(a) - off;
    let db = n.dot(b) - off;
    if da == db || da.signum() == db.signum() || da == 0.0 || db == 0.0 {
        return None;
    }
    let t = da / (da - db);
    (t > 0.0 && t < 1.0).then_some(t)
}

/// Whether every straight piece between consecutive points is clear.
pub fn segments_clear(prep: &PreparedScene, pts: &[Vec3]) -> bool {
    pts.windows(2).all(|w| !prep.bvh.occluded(w[0], w[1], OCCLUSION_MARGIN))
}

/// Exact path for a specular signature from `src` to `dst`, or `None` when
/// a point leaves its facet or a segment is blocked. Surface ids in the
/// result are canonical: the facet triangle that contains the point.
pub fn refine_specular(sig: &[SigElem], prep: &PreparedScene, src: Vec3, dst: Vec3) -> Option<Vec<Interaction>> {
    let facets = &prep.facets;
    if sig
        .iter()
        .any(|e| !matches!(e.kind, InteractionKind::Reflection | InteractionKind::Transmission) || e.id as usize >= facets.facet_of.len())
    {
        return None;
    }
    let refl: Vec<usize> = (0..sig.len()).filter(|&i| sig[i].kind == InteractionKind::Reflection).collect();
    // Image chain.
    let mut images = Vec::with_capacity(refl.len() + 1);
    images.push(src);
    for &i in &refl {
        let f = facets.facet(facets.facet_of[sig[i].id as usize]);
        let prev = *images.last().unwrap();
        if f.signed_distance(prev).abs() < 1e-12 {
            return None;
        }
        images.push(f.mirror(prev));
    }
    // Backtrack from the destination.
    let mut refl_pts = vec![Vec3::ZERO; refl.len()];
    let mut refl_tris = vec![0u32; refl.len()];
    let mut target = dst;
    for k in (0..refl.len()).rev() {
        let fid = facets.facet_of[sig[refl[k]].id as usize];
        let f = facets.facet(fid);
        let img = images[k + 1];
        let t = cross_plane(target, img, f.normal, f.offset)?;
        let p = target + (img - target) * t;
        refl_tris[k] = facets.containing_triangle(fid, p)?;
        refl_pts[k] = p;
        target = p;
    }
    // Walk the segments, placing transmissions in order.
    let mut out = Vec::with_capacity(sig.len());
    let mut seg_start = src;
    let mut k = 0;
    let mut i = 0;
    while i <= sig.len() {
        let seg_end = if k < refl.len() { refl_pts[k] } else { dst };
        let stop = if k < refl.len() { refl[k] } else { sig.len() };
        let mut last_t = 0.0;
        while i < stop {
            let e = sig[i];
            let fid = facets.facet_of[e.id as usize];
            let f = facets.facet(fid);
            let t = cross_plane(seg_start, seg_end, f.normal, f.offset)?;
            if t <= last_t {
                return None;
            }
            last_t = t;
            let p = seg_start + (seg_end - seg_start) * t;
            let tri = facets.containing_triangle(fid, p)?;
            out.push(Interaction { kind: InteractionKind::Transmission, point: p, surface_id: tri, sub: 0, material_id: f.material_id });
            i += 1;
        }
        if k < refl.len() {
            let f = facets.facet(facets.facet_of[refl_tris[k] as usize]);
            out.push(Interaction {
                kind: InteractionKind::Reflection,
                point: refl_pts[k],
                surface_id: refl_tris[k],
                sub: 0,
                material_id: f.material_id,
            });
            seg_start = refl_pts[k];
            k += 1;
            i += 1;
        } else {
            break;
        }
    }
    let mut pts = Vec::with_capacity(out.len() + 2);
    pts.push(src);
    pts.extend(out.iter().map(|x| x.point));
    pts.push(dst);
    if pts.windows(2).any(|w| w[0].distance(w[1]) < 1e-9) {
        return None;
    }
    segments_clear(prep, &pts).then_some(out)
}
