//! Single-bounce diffuse scattering from surface tiles.
//!
//! Each scattering triangle is split into `m^2` congruent sub-triangles,
//! `m = ceil(sqrt(area) / tile_size)`, so tiles have roughly the requested
//! area. A tile contributes one path when both link ends are on its front
//! side and both legs are unobstructed.

use super::refine::OCCLUSION_MARGIN;
use super::{Interaction, InteractionKind, PreparedScene};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tile {
    pub center: Vec3,
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileRef {
    pub triangle: u32,
    pub index: u32,
    pub center: Vec3,
    pub material_id: u32,
}

pub fn subdivisions(area: f64, tile_size: f64) -> u32 {
    ((area.sqrt() / tile_size).ceil() as u32).max(1)
}

/// Tiles of a triangle in a fixed order.
pub fn tiles_of(a: Vec3, b: Vec3, c: Vec3, tile_size: f64) -> Vec<Tile> {
    let area = 0.5 * (b - a).cross(c - a).norm();
    let m = subdivisions(area, tile_size);
    let mf = m as f64;
    let at = |i: u32, j: u32| a + (b - a) * (i as f64 / mf) + (c - a) * (j as f64 / mf);
    let sub = area / (mf * mf);
    let mut out = Vec::with_capacity((m * m) as usize);
    for i in 0..m {
        for j in 0..m - i {
            let (p, q, r) = (at(i, j), at(i + 1, j), at(i, j + 1));
            out.push(Tile { center: (p + q + r) / 3.0, area: sub });
            if j + 1 < m - i {
                let s = at(i + 1, j + 1);
                out.push(Tile { center: (q + s + r) / 3.0, area: sub });
            }
        }
    }
    out
}

/// Area of tile `index` on triangle `tri`.
pub fn tile_area(prep: &PreparedScene, tri: u32, tile_size: f64) -> f64 {
    let area = prep.bvh.triangle(tri).area();
    let m = subdivisions(area, tile_size) as f64;
    area / (m * m)
}

/// Tiles on scattering surfaces that face and see `p`.
pub fn visible_tiles(prep: &PreparedScene, p: Vec3, scatter: &[bool], tile_size: f64) -> Vec<TileRef> {
    let mut out = Vec::new();
    for (id, t) in prep.bvh.triangles().iter().enumerate() {
        if !scatter.get(t.material_id as usize).copied().unwrap_or(false) {
            continue;
        }
        if t.normal.dot(p - t.a).abs() < 1e-9 {
            continue;
        }
        for (k, tile) in tiles_of(t.a, t.b, t.c, tile_size).into_iter().enumerate() {
            if !prep.bvh.occluded(p, tile.center, OCCLUSION_MARGIN) {
                out.push(TileRef { triangle: id as u32, index: k as u32, center: tile.center, material_id: t.material_id });
            }
        }
    }
    out
}

/// Scattering paths (tx-to-rx order) through tiles already known to be
/// visible from `tx`.
pub fn paths_from_tiles(prep: &PreparedScene, tiles: &[TileRef], tx: Vec3, rx: Vec3) -> Vec<Vec<Interaction>> {
    let mut out = Vec::new();
    for t in tiles {
        let tri = prep.bvh.triangle(t.triangle);
        let (dt, dr) = (tri.normal.dot(tx - t.center), tri.normal.dot(rx - t.center));
        if dt * dr <= 0.0 || dr.abs() < 1e-9 {
            continue;
        }
        if prep.bvh.occluded(t.center, rx, OCCLUSION_MARGIN) {
            continue;
        }
        out.push(vec![Interaction {
            kind: InteractionKind::Scattering,
            point: t.center,
            surface_id: t.triangle,
            sub: t.index,
            material_id: t.material_id,
        }]);
    }
    out
}

/// Scattering paths for one link.
pub fn scattering_paths(prep: &PreparedScene, tx: Vec3, rx: Vec3, scatter: &[bool], tile_size: f64) -> Vec<Vec<Interaction>> {
    let tiles = visible_tiles(prep, tx, scatter, tile_size);
    paths_from_tiles(prep, &tiles, tx, rx)
}
