//! Planar facets: groups of coplanar triangles sharing a material.
//!
//! Reflection and transmission points are assigned to the triangle of the
//! facet that actually contains them, so a path found through one triangle
//! of a split quad gets the same signature from every search method.

use std::collections::HashMap;

use crate::geometry::{point_in_triangle, Vec3};
use crate::scene::WorldTriangle;

/// Containment tolerance for refined points, meters.
pub const CONTAINMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    /// Unit normal with a canonical sign.
    pub normal: Vec3,
    /// Plane offset `normal . p`.
    pub offset: f64,
    pub material_id: u32,
    /// Member triangles, ascending.
    pub triangles: Vec<u32>,
}

impl Facet {
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn mirror(&self, p: Vec3) -> Vec3 {
        p - self.normal * (2.0 * self.signed_distance(p))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Facets {
    pub facets: Vec<Facet>,
    /// Facet index of every triangle.
    pub facet_of: Vec<u32>,
    vertices: Vec<[Vec3; 3]>,
}

fn canonical_normal(n: Vec3) -> Vec3 {
    let flip = if n.x.abs() > 1e-12 {
        n.x < 0.0
    } else if n.y.abs() > 1e-12 {
        n.y < 0.0
    } else {
        n.z < 0.0
    };
    if flip {
        -n
    } else {
        n
    }
}

impl Facets {
    pub fn build(tris: &[WorldTriangle]) -> Facets {
        let mut key_of: HashMap<(i64, i64, i64, i64, u32), u32> = HashMap::new();
        let mut facets: Vec<Facet> = Vec::new();
        let mut facet_of = Vec::with_capacity(tris.len());
        for (i, t) in tris.iter().enumerate() {
            let n = canonical_normal(t.normal);
            let off = n.dot(t.a);
            let q = |x: f64, s: f64| (x * s).round() as i64;
            let key = (q(n.x, 1e8), q(n.y, 1e8), q(n.z, 1e8), q(off, 1e6), t.material_id);
            let id = *key_of.entry(key).or_insert_with(|| {
                facets.push(Facet { normal: n, offset: off, material_id: t.material_id, triangles: Vec::new() });
                (facets.len() - 1) as u32
            });
            facets[id as usize].triangles.push(i as u32);
            facet_of.push(id);
        }
        let vertices = tris.iter().map(|t| [t.a, t.b, t.c]).collect();
        Facets { facets, facet_of, vertices }
    }

    pub fn len(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    pub fn facet(&self, id: u32) -> &Facet {
        &self.facets[id as usize]
    }

    /// Plane of a triangle, through its own vertices.
    pub fn plane_of_triangle(&self, tri: u32) -> (Vec3, f64) {
        let f = &self.facets[self.facet_of[tri as usize] as usize];
        (f.normal, f.normal.dot(self.vertices[tri as usize][0]))
    }

    /// Smallest-id triangle of the facet containing `p` (assumed on the
    /// facet plane).
    pub fn containing_triangle(&self, facet: u32, p: Vec3) -> Option<u32> {
        self.facets[facet as usize].triangles.iter().copied().find(|&t| {
            let [a, b, c] = self.vertices[t as usize];
            point_in_triangle(p, a, b, c, CONTAINMENT_TOL)
        })
    }

    pub fn vertices(&self, tri: u32) -> [Vec3; 3] {
        self.vertices[tri as usize]
    }
}
