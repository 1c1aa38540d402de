//! Bounding volume hierarchy over a snapshot's triangles.
//!
//! Binned SAH build into a flat node array; traversal is iterative,
//! near-child first. Ties between equally distant hits resolve to the
//! smaller triangle id, matching [`brute_force_intersect`].

use crate::geometry::{inverse_dir, ray_triangle, Aabb, Vec3};
use crate::scene::{RayHit, Scene, Snapshot, WorldTriangle};

const LEAF_SIZE: usize = 4;
const BINS: usize = 12;

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: index of first packed triangle. Interior: index of left child
    /// (right child is `left + 1`).
    start: u32,
    /// Zero for interior nodes.
    count: u32,
    axis: u8,
}

#[derive(Debug, Clone, Copy)]
struct PackedTri {
    a: Vec3,
    b: Vec3,
    c: Vec3,
    id: u32,
}

#[derive(Debug, Clone)]
pub struct BvhIndex {
    nodes: Vec<Node>,
    packed: Vec<PackedTri>,
    triangles: Vec<WorldTriangle>,
    n_static: usize,
    time: f64,
}

/// Index over the scene posed at `time`.
pub fn build_bvh(scene: &Scene, time: f64) -> BvhIndex {
    BvhIndex::build(&scene.snapshot(time))
}

#[inline]
fn slab(b: &Aabb, origin: Vec3, inv: Vec3, t0: f64, t1: f64) -> Option<f64> {
    let mut lo = t0;
    let mut hi = t1;
    for a in 0..3 {
        let mut ta = (b.min[a] - origin[a]) * inv[a];
        let mut tb = (b.max[a] - origin[a]) * inv[a];
        if ta.is_nan() {
            ta = f64::NEG_INFINITY;
        }
        if tb.is_nan() {
            tb = f64::INFINITY;
        }
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        lo = lo.max(ta);
        hi = hi.min(tb);
    }
    // Slack keeps hits that lie exactly on a box face.
    if lo <= hi + 1e-9 * (1.0 + hi.abs()) {
        Some(lo)
    } else {
        None
    }
}

struct BuildItem {
    bounds: Aabb,
    centroid: Vec3,
    id: u32,
}

impl BvhIndex {
    pub fn build(snapshot: &Snapshot) -> BvhIndex {
        let triangles = snapshot.triangles.clone();
        let mut items: Vec<BuildItem> = triangles
            .iter()
            .enumerate()
            .map(|(i, t)| BuildItem { bounds: t.bounds(), centroid: t.centroid(), id: i as u32 })
            .collect();
        let mut nodes = Vec::with_capacity(2 * items.len().max(1));
        nodes.push(Node { bounds: Aabb::EMPTY, start: 0, count: 0, axis: 0 });
        if !items.is_empty() {
            let n = items.len();
            Self::build_recursive(&mut nodes, 0, &mut items, 0, n);
        }
        let packed = items
            .iter()
            .map(|it| {
                let t = &triangles[it.id as usize];
                PackedTri { a: t.a, b: t.b, c: t.c, id: it.id }
            })
            .collect();
        BvhIndex { nodes, packed, triangles, n_static: snapshot.n_static, time: snapshot.time }
    }

    fn build_recursive(nodes: &mut Vec<Node>, node: usize, items: &mut [BuildItem], lo: usize, hi: usize) {
        let slice = &mut items[lo..hi];
        let bounds = slice.iter().fold(Aabb::EMPTY, |b, it| b.union(it.bounds));
        let cbounds = Aabb::from_points(slice.iter().map(|it| it.centroid));
        let n = slice.len();
        if n <= LEAF_SIZE {
            nodes[node] = Node { bounds, start: lo as u32, count: n as u32, axis: 0 };
            return;
        }
        // Binned SAH over the widest centroid axis.
        let ext = cbounds.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let cmin = cbounds.min[axis];
        let span = ext[axis];
        let mid = if span <= 0.0 {
            n / 2
        } else {
            let mut bin_bounds = [Aabb::EMPTY; BINS];
            let mut bin_count = [0usize; BINS];
            let bin_of = |c: f64| (((c - cmin) / span * BINS as f64) as usize).min(BINS - 1);
            for it in slice.iter() {
                let b = bin_of(it.centroid[axis]);
                bin_bounds[b] = bin_bounds[b].union(it.bounds);
                bin_count[b] += 1;
            }
            let mut best = (f64::INFINITY, 0usize);
            for split in 1..BINS {
                let (mut lb, mut lc) = (Aabb::EMPTY, 0);
                for k in 0..split {
                    lb = lb.union(bin_bounds[k]);
                    lc += bin_count[k];
                }
                let (mut rb, mut rc) = (Aabb::EMPTY, 0);
                for k in split..BINS {
                    rb = rb.union(bin_bounds[k]);
                    rc += bin_count[k];
                }
                if lc == 0 || rc == 0 {
                    continue;
                }
                let cost = lb.surface_area() * lc as f64 + rb.surface_area() * rc as f64;
                if cost < best.0 {
                    best = (cost, split);
                }
            }
            if best.0.is_finite() {
                let split = best.1;
                let mut i = 0;
                for j in 0..n {
                    if bin_of(slice[j].centroid[axis]) < split {
                        slice.swap(i, j);
                        i += 1;
                    }
                }
                i
            } else {
                n / 2
            }
        };
        let mid = if mid == 0 || mid == n {
            slice.sort_by(|a, b| a.centroid[axis].total_cmp(&b.centroid[axis]).then(a.id.cmp(&b.id)));
            n / 2
        } else {
            mid
        };
        let left = nodes.len();
        nodes.push(Node { bounds: Aabb::EMPTY, start: 0, count: 0, axis: 0 });
        nodes.push(Node { bounds: Aabb::EMPTY, start: 0, count: 0, axis: 0 });
        nodes[node] = Node { bounds, start: left as u32, count: 0, axis: axis as u8 };
        Self::build_recursive(nodes, left, items, lo, lo + mid);
        Self::build_recursive(nodes, left + 1, items, lo + mid, hi);
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    pub fn triangles(&self) -> &[WorldTriangle] {
        &self.triangles
    }

    pub fn triangle(&self, id: u32) -> &WorldTriangle {
        &self.triangles[id as usize]
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn n_static(&self) -> usize {
        self.n_static
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Nearest hit with distance in `(t_min, t_max]`.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Option<RayHit> {
        if self.packed.is_empty() {
            return None;
        }
        let inv = inverse_dir(dir);
        let mut best_t = t_max;
        let mut best_id = u32::MAX;
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        if slab(&self.nodes[0].bounds, origin, inv, t_min, best_t).is_none() {
            return None;
        }
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.count > 0 {
                let s = node.start as usize;
                for p in &self.packed[s..s + node.count as usize] {
                    if let Some((t, _, _)) = ray_triangle(origin, dir, p.a, p.b, p.c) {
                        if t > t_min && (t < best_t || (t == best_t && p.id < best_id)) {
                            best_t = t;
                            best_id = p.id;
                        }
                    }
                }
                continue;
            }
            let l = node.start;
            let r = l + 1;
            let tl = slab(&self.nodes[l as usize].bounds, origin, inv, t_min, best_t);
            let tr = slab(&self.nodes[r as usize].bounds, origin, inv, t_min, best_t);
            let near_left = dir[node.axis as usize] >= 0.0;
            let (first, second, tf, ts) = if near_left { (l, r, tl, tr) } else { (r, l, tr, tl) };
            // Push the far child first so the near one is popped next.
            if ts.is_some() {
                stack[sp] = second;
                sp += 1;
            }
            if tf.is_some() {
                stack[sp] = first;
                sp += 1;
            }
        }
        if best_id == u32::MAX {
            return None;
        }
        Some(self.make_hit(best_id, origin, dir, best_t))
    }

    fn make_hit(&self, id: u32, origin: Vec3, dir: Vec3, t: f64) -> RayHit {
        let tri = &self.triangles[id as usize];
        let n = if tri.normal.dot(dir) > 0.0 { -tri.normal } else { tri.normal };
        RayHit { triangle_id: id, distance: t, point: origin + dir * t, normal: n }
    }

    /// True when anything lies strictly between `from` and `to`, ignoring
    /// `margin` meters at both ends.
    pub fn occluded(&self, from: Vec3, to: Vec3, margin: f64) -> bool {
        let d = to - from;
        let len = d.norm();
        if len <= 2.0 * margin {
            return false;
        }
        let dir = d / len;
        self.any_hit(from, dir, margin, len - margin)
    }

    pub fn any_hit(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> bool {
        if self.packed.is_empty() {
            return false;
        }
        let inv = inverse_dir(dir);
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if slab(&node.bounds, origin, inv, t_min, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for p in &self.packed[s..s + node.count as usize] {
                    if let Some((t, _, _)) = ray_triangle(origin, dir, p.a, p.b, p.c) {
                        if t > t_min && t < t_max {
                            return true;
                        }
                    }
                }
            } else {
                stack[sp] = node.start;
                stack[sp + 1] = node.start + 1;
                sp += 2;
            }
        }
        false
    }
}

/// Reference all-triangles scan with the same hit and tie rules.
pub fn brute_force_intersect(
    triangles: &[WorldTriangle],
    origin: Vec3,
    dir: Vec3,
    t_min: f64,
    t_max: f64,
) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for (i, t) in triangles.iter().enumerate() {
        if let Some((d, _, _)) = ray_triangle(origin, dir, t.a, t.b, t.c) {
            if d > t_min && d <= t_max && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i as u32, d));
            }
        }
    }
    best
}
