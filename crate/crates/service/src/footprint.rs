use std::collections::HashMap;

use petgraph::unionfind::UnionFind;
use raytwin::geometry::Aabb;
use raytwin::scene::Scene;
use serde::{Deserialize, Serialize};

use crate::API_SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintPolygon {
    /// Counter-clockwise convex outline in the xy plane, closed.
    pub points: Vec<[f64; 2]>,
    pub z_min: f64,
    pub z_max: f64,
    pub triangle_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub schema_version: u32,
    pub bounds: Aabb,
    pub polygons: Vec<FootprintPolygon>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise, closed, collinear points
/// dropped.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        for &p in pts.iter() {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
        if pass == 0 {
            pts.reverse();
        }
    }
    hull.push(hull[0]);
    hull
}

fn weld_key(x: f64, y: f64, z: f64) -> (i64, i64, i64) {
    let q = |v: f64| (v * 1e6).round() as i64;
    (q(x), q(y), q(z))
}

/// Planar outlines of the static geometry: one convex hull per connected
/// mesh component, ignoring flat triangles at the lowest height (ground).
pub fn footprint(scene: &Scene) -> Footprint {
    let z0 = scene.bounds.min.z;
    let flat_at_ground = |t: &raytwin::scene::Triangle| t.vertices.iter().all(|&v| (scene.vertices[v as usize].z - z0).abs() < 1e-6);
    let tris: Vec<_> = scene.triangles.iter().filter(|t| !flat_at_ground(t)).collect();
    // Weld coincident vertices so separately indexed but touching meshes
    // form one component.
    let mut ids: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let welded: Vec<[usize; 3]> = tris
        .iter()
        .map(|t| {
            t.vertices.map(|v| {
                let p = scene.vertices[v as usize];
                let n = ids.len();
                *ids.entry(weld_key(p.x, p.y, p.z)).or_insert(n)
            })
        })
        .collect();
    let mut uf = UnionFind::<usize>::new(ids.len().max(1));
    for w in &welded {
        uf.union(w[0], w[1]);
        uf.union(w[0], w[2]);
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for (k, w) in welded.iter().enumerate() {
        let root = uf.find(w[0]);
        let g = *slot.entry(root).or_insert_with(|| {
            groups.push((root, Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(k);
    }
    let polygons = groups
        .into_iter()
        .map(|(_, members)| {
            let verts: Vec<_> = members.iter().flat_map(|&k| tris[k].vertices).map(|v| scene.vertices[v as usize]).collect();
            FootprintPolygon {
                points: convex_hull(verts.iter().map(|p| [p.x, p.y]).collect()),
                z_min: verts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min),
                z_max: verts.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max),
                triangle_count: members.len(),
            }
        })
        .collect();
    Footprint { schema_version: API_SCHEMA_VERSION, bounds: scene.bounds, polygons }
}
