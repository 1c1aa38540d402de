//! Exhaustive image-method enumeration of specular paths.

use super::refine::segments_clear;
use super::{EngineError, Interaction, InteractionKind, PreparedScene};
use crate::geometry::Vec3;

/// Largest number of planar facets accepted by [`enumerate_images`].
pub const IM_FACET_LIMIT: usize = 200;

struct Search<'a> {
    prep: &'a PreparedScene,
    src: Vec3,
    dst: Vec3,
    max_order: usize,
    out: Vec<Vec<Interaction>>,
}

impl Search<'_> {
    /// Whether some vertex of facet `next` lies strictly on the side of
    /// facet `cur` given by `sign`.
    fn facet_on_side(&self, next: u32, cur: u32, sign: f64) -> bool {
        let f = self.prep.facets.facet(cur);
        self.prep.facets.facet(next).triangles.iter().any(|&t| {
            self.prep.facets.vertices(t).iter().any(|&v| f.signed_distance(v) * sign > 1e-9)
        })
    }

    fn recurse(&mut self, chain: &mut Vec<u32>, images: &mut Vec<Vec3>) {
        if !chain.is_empty() {
            self.try_chain(chain, images);
        }
        if chain.len() == self.max_order {
            return;
        }
        for next in 0..self.prep.facets.len() as u32 {
            if chain.last() == Some(&next) {
                continue;
            }
            let prev = *images.last().unwrap();
            let f = self.prep.facets.facet(next);
            let dist = f.signed_distance(prev);
            if dist.abs() < 1e-12 {
                continue;
            }
            // The next facet must be reachable from the previous one on the
            // side the wave leaves it.
            if let (Some(&cur), true) = (chain.last(), images.len() >= 2) {
                let before = images[images.len() - 2];
                let side = self.prep.facets.facet(cur).signed_distance(before).signum();
                if !self.facet_on_side(next, cur, side) {
                    continue;
                }
            }
            chain.push(next);
            images.push(f.mirror(prev));
            self.recurse(chain, images);
            images.pop();
            chain.pop();
        }
    }

    fn try_chain(&mut self, chain: &[u32], images: &[Vec3]) {
        let facets = &self.prep.facets;
        let m = chain.len();
        let mut pts = vec![Vec3::ZERO; m];
        let mut tris = vec![0u32; m];
        let mut target = self.dst;
        for k in (0..m).rev() {
            let f = facets.facet(chain[k]);
            let img = images[k + 1];
            let (da, db) = (f.signed_distance(target), f.signed_distance(img));
            if da == 0.0 || db == 0.0 || da.signum() == db.signum() {
                return;
            }
            let t = da / (da - db);
            let p = target + (img - target) * t;
            let Some(tri) = facets.containing_triangle(chain[k], p) else { return };
            pts[k] = p;
            tris[k] = tri;
            target = p;
        }
        let mut all = Vec::with_capacity(m + 2);
        all.push(self.src);
        all.extend_from_slice(&pts);
        all.push(self.dst);
        if all.windows(2).any(|w| w[0].distance(w[1]) < 1e-9) || !segments_clear(self.prep, &all) {
            return;
        }
        self.out.push(
            (0..m)
                .map(|k| Interaction {
                    kind: InteractionKind::Reflection,
                    point: pts[k],
                    surface_id: tris[k],
                    sub: 0,
                    material_id: facets.facet(chain[k]).material_id,
                })
                .collect(),
        );
    }
}

/// All valid specular paths from `src` to `dst` with at most `max_order`
/// reflections (at most 3), including the direct path when unobstructed.
/// Surface ids are canonical, as in [`super::refine_specular`].
pub fn enumerate_images(prep: &PreparedScene, src: Vec3, dst: Vec3, max_order: u32) -> Result<Vec<Vec<Interaction>>, EngineError> {
    if prep.facets.len() > IM_FACET_LIMIT {
        return Err(EngineError::TooLargeForImageMethod { facets: prep.facets.len(), limit: IM_FACET_LIMIT });
    }
    if max_order > 3 {
        return Err(EngineError::Config("image method supports at most 3 reflections".into()));
    }
    let mut s = Search { prep, src, dst, max_order: max_order as usize, out: Vec::new() };
    if src.distance(dst) > 1e-9 && segments_clear(prep, &[src, dst]) {
        s.out.push(Vec::new());
    }
    s.recurse(&mut Vec::new(), &mut vec![src]);
    Ok(s.out)
}
