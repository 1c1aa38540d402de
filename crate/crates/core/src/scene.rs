//! Environment model: static triangle geometry, keyframed moving objects,
//! quasi-static snapshots, and diffraction-edge extraction.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Vec3};
use crate::materials::{Material, MaterialError, MaterialLibrary};

/// Triangles with a smaller area are dropped at load time.
pub const DEGENERATE_AREA_M2: f64 = 1e-9;
/// Default dihedral deviation (degrees) above which a shared edge diffracts.
pub const DEFAULT_DIHEDRAL_THRESHOLD_DEG: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("cannot read scene {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scene parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scene validation error: {0}")]
    Invalid(String),
    #[error(transparent)]
    Material(#[from] MaterialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub vertices: [u32; 3],
    pub material_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub t: f64,
    pub pos: Vec3,
    pub yaw_deg: f64,
}

/// Rigid mesh moving along keyframes. Mesh vertices are in the object's
/// local frame; the pose is a yaw about +z followed by a translation.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicObject {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<Triangle>,
    pub keyframes: Vec<Keyframe>,
}

impl DynamicObject {
    /// Pose at `t`: linear position, shortest-arc yaw, clamped outside the
    /// keyframe range.
    pub fn pose_at(&self, t: f64) -> (Vec3, f64) {
        let kf = &self.keyframes;
        let first = kf[0];
        let last = kf[kf.len() - 1];
        if t <= first.t {
            return (first.pos, first.yaw_deg);
        }
        if t >= last.t {
            return (last.pos, last.yaw_deg);
        }
        let i = kf.partition_point(|k| k.t <= t);
        let (a, b) = (kf[i - 1], kf[i]);
        let w = (t - a.t) / (b.t - a.t);
        let pos = a.pos + (b.pos - a.pos) * w;
        let mut dyaw = (b.yaw_deg - a.yaw_deg).rem_euclid(360.0);
        if dyaw > 180.0 {
            dyaw -= 360.0;
        }
        (pos, a.yaw_deg + dyaw * w)
    }

    /// Local-frame point carried to world coordinates at `t`.
    pub fn transform(&self, local: Vec3, t: f64) -> Vec3 {
        let (pos, yaw) = self.pose_at(t);
        rotate_yaw(local, yaw) + pos
    }

    fn local_extent(&self) -> (f64, f64, f64) {
        let mut r = 0.0f64;
        let mut zmin = f64::INFINITY;
        let mut zmax = f64::NEG_INFINITY;
        for v in &self.vertices {
            r = r.max((v.x * v.x + v.y * v.y).sqrt());
            zmin = zmin.min(v.z);
            zmax = zmax.max(v.z);
        }
        (r, zmin, zmax)
    }
}

fn rotate_yaw(v: Vec3, yaw_deg: f64) -> Vec3 {
    let (s, c) = yaw_deg.to_radians().sin_cos();
    Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicObjectFile {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 4]>,
    keyframes: Vec<Keyframe>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema_version: Option<u32>,
    units: String,
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 4]>,
    #[serde(default)]
    dynamic_objects: Vec<DynamicObjectFile>,
    /// Inline material library; the default library is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    materials: Option<Vec<Material>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<Triangle>,
    pub dynamic_objects: Vec<DynamicObject>,
    pub materials: MaterialLibrary,
    pub bounds: Aabb,
    /// Degenerate triangles removed while loading.
    pub dropped_degenerate: usize,
    inline_materials: bool,
}

pub fn load_scene(path: &Path) -> Result<Scene, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scene::from_json(&text)
}

fn triangle_area(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    0.5 * (b - a).cross(c - a).norm()
}

fn check_triangles(
    raw: &[[u32; 4]],
    vertices: &[Vec3],
    n_materials: usize,
    what: &str,
) -> Result<(Vec<Triangle>, usize), SceneError> {
    let mut out = Vec::with_capacity(raw.len());
    let mut dropped = 0;
    for (i, t) in raw.iter().enumerate() {
        for &vi in &t[..3] {
            if vi as usize >= vertices.len() {
                return Err(SceneError::Invalid(format!(
                    "{what} triangle {i}: vertex index {vi} out of range ({} vertices)",
                    vertices.len()
                )));
            }
        }
        if t[3] as usize >= n_materials {
            return Err(SceneError::Invalid(format!(
                "{what} triangle {i}: unknown material_id {} ({} materials defined)",
                t[3], n_materials
            )));
        }
        let [a, b, c] = [t[0], t[1], t[2]].map(|k| vertices[k as usize]);
        if triangle_area(a, b, c) < DEGENERATE_AREA_M2 {
            dropped += 1;
            continue;
        }
        out.push(Triangle { vertices: [t[0], t[1], t[2]], material_id: t[3] });
    }
    Ok((out, dropped))
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Scene, SceneError> {
        let file: SceneFile = serde_json::from_str(text)?;
        if file.units != "m" {
            return Err(SceneError::Invalid(format!("units must be \"m\", got {:?}", file.units)));
        }
        let inline_materials = file.materials.is_some();
        let materials = match file.materials {
            Some(m) => MaterialLibrary::new(m)?,
            None => MaterialLibrary::load_default()?,
        };
        let mut dynamic_objects = Vec::with_capacity(file.dynamic_objects.len());
        let mut dropped_total = 0;
        for (k, d) in file.dynamic_objects.iter().enumerate() {
            let (tris, dropped) =
                check_triangles(&d.triangles, &d.vertices, materials.len(), &format!("dynamic object {k}"))?;
            dropped_total += dropped;
            dynamic_objects.push(DynamicObject {
                vertices: d.vertices.clone(),
                triangles: tris,
                keyframes: d.keyframes.clone(),
            });
        }
        let (triangles, dropped) = check_triangles(&file.triangles, &file.vertices, materials.len(), "static")?;
        dropped_total += dropped;
        if dropped_total > 0 {
            log::warn!("dropped {dropped_total} degenerate triangles");
        }
        let mut scene = Scene::new(file.vertices, triangles, dynamic_objects, materials)?;
        scene.dropped_degenerate = dropped_total;
        scene.inline_materials = inline_materials;
        Ok(scene)
    }

    /// Build and validate a scene from in-memory parts.
    pub fn new(
        vertices: Vec<Vec3>,
        triangles: Vec<Triangle>,
        dynamic_objects: Vec<DynamicObject>,
        materials: MaterialLibrary,
    ) -> Result<Scene, SceneError> {
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(SceneError::Invalid(format!("vertex {i} is not finite")));
        }
        for (i, t) in triangles.iter().enumerate() {
            if t.vertices.iter().any(|&v| v as usize >= vertices.len()) {
                return Err(SceneError::Invalid(format!("triangle {i}: vertex index out of range")));
            }
            if t.material_id as usize >= materials.len() {
                return Err(SceneError::Invalid(format!(
                    "triangle {i}: unknown material_id {}",
                    t.material_id
                )));
            }
        }
        for (k, d) in dynamic_objects.iter().enumerate() {
            if d.keyframes.is_empty() {
                return Err(SceneError::Invalid(format!("dynamic object {k} has no keyframes")));
            }
            if d.keyframes.windows(2).any(|w| !(w[1].t > w[0].t)) {
                return Err(SceneError::Invalid(format!(
                    "dynamic object {k}: keyframe times must be strictly increasing"
                )));
            }
            if d.keyframes.iter().any(|kf| !kf.pos.is_finite() || !kf.t.is_finite() || !kf.yaw_deg.is_finite()) {
                return Err(SceneError::Invalid(format!("dynamic object {k}: non-finite keyframe")));
            }
            if d.vertices.iter().any(|v| !v.is_finite()) {
                return Err(SceneError::Invalid(format!("dynamic object {k}: non-finite vertex")));
            }
            for t in &d.triangles {
                if t.vertices.iter().any(|&v| v as usize >= d.vertices.len())
                    || t.material_id as usize >= materials.len()
                {
                    return Err(SceneError::Invalid(format!("dynamic object {k}: bad triangle")));
                }
            }
        }
        let mut bounds = Aabb::from_points(vertices.iter().copied());
        for d in &dynamic_objects {
            let (r, zmin, zmax) = d.local_extent();
            for kf in &d.keyframes {
                bounds = bounds
                    .grow(Vec3::new(kf.pos.x - r, kf.pos.y - r, kf.pos.z + zmin))
                    .grow(Vec3::new(kf.pos.x + r, kf.pos.y + r, kf.pos.z + zmax));
            }
        }
        Ok(Scene {
            vertices,
            triangles,
            dynamic_objects,
            materials,
            bounds,
            dropped_degenerate: 0,
            inline_materials: true,
        })
    }

    pub fn to_json(&self) -> String {
        let tri = |t: &Triangle| [t.vertices[0], t.vertices[1], t.vertices[2], t.material_id];
        let file = SceneFile {
            schema_version: Some(1),
            units: "m".into(),
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(tri).collect(),
            dynamic_objects: self
                .dynamic_objects
                .iter()
                .map(|d| DynamicObjectFile {
                    vertices: d.vertices.clone(),
                    triangles: d.triangles.iter().map(tri).collect(),
                    keyframes: d.keyframes.clone(),
                })
                .collect(),
            materials: self.inline_materials.then(|| self.materials.materials().to_vec()),
        };
        serde_json::to_string(&file).expect("scene serializes")
    }

    pub fn with_materials(&self, materials: MaterialLibrary) -> Scene {
        Scene { materials, inline_materials: true, ..self.clone() }
    }

    /// Number of triangles posed in every snapshot.
    pub fn triangle_count(&self) -> usize {
        self.triangles.len() + self.dynamic_objects.iter().map(|d| d.triangles.len()).sum::<usize>()
    }

    pub fn is_static(&self) -> bool {
        self.dynamic_objects.is_empty()
    }

    /// Pose every dynamic object at `time` and flatten the scene into a
    /// triangle soup. Static triangles keep their ids; dynamic-object
    /// triangles follow in object order.
    pub fn snapshot(&self, time: f64) -> Snapshot {
        let mut tris = Vec::with_capacity(self.triangle_count());
        for t in &self.triangles {
            let [a, b, c] = t.vertices.map(|i| self.vertices[i as usize]);
            tris.push(WorldTriangle::new(a, b, c, t.material_id));
        }
        for d in &self.dynamic_objects {
            let (pos, yaw) = d.pose_at(time);
            for t in &d.triangles {
                let [a, b, c] = t.vertices.map(|i| rotate_yaw(d.vertices[i as usize], yaw) + pos);
                tris.push(WorldTriangle::new(a, b, c, t.material_id));
            }
        }
        let bounds = Aabb::from_points(tris.iter().flat_map(|t| [t.a, t.b, t.c]));
        Snapshot { time, triangles: tris, n_static: self.triangles.len(), bounds }
    }
}

/// A triangle in world coordinates with its winding normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldTriangle {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
    /// Unit normal from the counter-clockwise winding (outward for
    /// consistently wound closed meshes).
    pub normal: Vec3,
    pub material_id: u32,
}

impl WorldTriangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3, material_id: u32) -> Self {
        let normal = (b - a).cross(c - a).normalized();
        WorldTriangle { a, b, c, normal, material_id }
    }

    pub fn area(&self) -> f64 {
        triangle_area(self.a, self.b, self.c)
    }

    pub fn centroid(&self) -> Vec3 {
        (self.a + self.b + self.c) / 3.0
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points([self.a, self.b, self.c])
    }

    pub fn vertices(&self) -> [Vec3; 3] {
        [self.a, self.b, self.c]
    }
}

/// Scene frozen at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub triangles: Vec<WorldTriangle>,
    pub n_static: usize,
    pub bounds: Aabb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub triangle_id: u32,
    pub distance: f64,
    pub point: Vec3,
    /// Unit normal facing the incoming ray.
    pub normal: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffractionEdge {
    pub endpoints: [Vec3; 2],
    /// Outward normals of the face the exterior angle is measured from
    /// (face 0) and of the closing face (face n).
    pub face_normals: [Vec3; 2],
    /// Unit vectors lying in each face, perpendicular to the edge and
    /// pointing away from it.
    pub face_tangents: [Vec3; 2],
    /// Angle of the solid between the two faces, radians.
    pub interior_wedge_angle: f64,
    pub material_id: u32,
    pub face_ids: [u32; 2],
}

impl DiffractionEdge {
    pub fn direction(&self) -> Vec3 {
        (self.endpoints[1] - self.endpoints[0]).normalized()
    }

    pub fn length(&self) -> f64 {
        self.endpoints[0].distance(self.endpoints[1])
    }

    /// Exterior wedge parameter `n` with the open angle equal to `n pi`.
    pub fn wedge_n(&self) -> f64 {
        (2.0 * PI - self.interior_wedge_angle) / PI
    }

    /// Angle of `p` measured from face 0 through the exterior region, in
    /// `[0, 2 pi)`. Points with angle above `n pi` are inside the solid.
    pub fn exterior_angle(&self, p: Vec3) -> f64 {
        let e = self.direction();
        let rel = p - self.endpoints[0];
        let v = rel - e * rel.dot(e);
        let a = v.dot(self.face_normals[0]).atan2(v.dot(self.face_tangents[0]));
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    }
}

fn weld_key(p: Vec3) -> (i64, i64, i64) {
    let q = |x: f64| (x * 1e6).round() as i64;
    (q(p.x), q(p.y), q(p.z))
}

pub fn extract_diffraction_edges(scene: &Scene, dihedral_threshold_deg: f64) -> Vec<DiffractionEdge> {
    let t0 = scene
        .dynamic_objects
        .iter()
        .filter_map(|d| d.keyframes.first().map(|k| k.t))
        .fold(0.0f64, f64::min);
    edges_of_snapshot(&scene.snapshot(t0), dihedral_threshold_deg)
}

/// Edges shared by exactly two faces whose dihedral angle deviates from a
/// straight continuation by more than the threshold. Each edge is listed
/// once, in a deterministic order.
pub fn edges_of_snapshot(snap: &Snapshot, dihedral_threshold_deg: f64) -> Vec<DiffractionEdge> {
    let mut ids: HashMap<(i64, i64, i64), u32> = HashMap::new();
    let mut pts: Vec<Vec3> = Vec::new();
    let mut weld = |p: Vec3| -> u32 {
        *ids.entry(weld_key(p)).or_insert_with(|| {
            pts.push(p);
            (pts.len() - 1) as u32
        })
    };
    let mut by_edge: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for (ti, t) in snap.triangles.iter().enumerate() {
        let v = [weld(t.a), weld(t.b), weld(t.c)];
        for k in 0..3 {
            let (a, b) = (v[k], v[(k + 1) % 3]);
            if a == b {
                continue;
            }
            by_edge.entry((a.min(b), a.max(b))).or_default().push(ti as u32);
        }
    }
    let mut keys: Vec<_> = by_edge.keys().copied().collect();
    keys.sort_unstable();
    let threshold = dihedral_threshold_deg.to_radians();
    let mut out = Vec::new();
    for key in keys {
        let faces = &by_edge[&key];
        if faces.len() != 2 {
            continue;
        }
        let (p0, p1) = (pts[key.0 as usize], pts[key.1 as usize]);
        let (f0, f1) = (faces[0].min(faces[1]), faces[0].max(faces[1]));
        let (t0, t1) = (&snap.triangles[f0 as usize], &snap.triangles[f1 as usize]);
        let e = (p1 - p0).normalized();
        let tangent = |t: &WorldTriangle| {
            // Vertex of the face not on the edge.
            let far = t
                .vertices()
                .into_iter()
                .max_by(|x, y| {
                    let dx = (*x - p0) - e * (*x - p0).dot(e);
                    let dy = (*y - p0) - e * (*y - p0).dot(e);
                    dx.norm_sq().total_cmp(&dy.norm_sq())
                })
                .unwrap();
            let rel = far - p0;
            (rel - e * rel.dot(e)).normalized()
        };
        let (u0, u1) = (tangent(t0), tangent(t1));
        let between = u0.dot(u1).clamp(-1.0, 1.0).acos();
        // Straight continuation has the two in-face directions opposite.
        if PI - between <= threshold {
            continue;
        }
        // Solid lies on the side opposite face 0's outward normal.
        let interior = if t0.normal.dot(u1) < 0.0 { between } else { 2.0 * PI - between };
        out.push(DiffractionEdge {
            endpoints: [p0, p1],
            face_normals: [t0.normal, t1.normal],
            face_tangents: [u0, u1],
            interior_wedge_angle: interior,
            material_id: t0.material_id,
            face_ids: [f0, f1],
        });
    }
    out
}
