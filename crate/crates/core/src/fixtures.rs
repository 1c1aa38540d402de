//! Synthetic scene generators with known ground truth.
//!
//! These back the test suites and the acceptance harness, and are exposed
//! so the CLI and service can write them out as demo scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Aabb, Vec3};
use crate::materials::{Material, MaterialLibrary};
use crate::scene::{DynamicObject, Keyframe, Scene, Triangle};

fn tri(a: u32, b: u32, c: u32, m: u32) -> Triangle {
    Triangle { vertices: [a, b, c], material_id: m }
}

/// Two-triangle square ground plane at z = 0, normal +z.
pub fn ground_plane(half_size: f64, material_id: u32) -> Scene {
    let h = half_size;
    let v = vec![
        Vec3::new(-h, -h, 0.0),
        Vec3::new(h, -h, 0.0),
        Vec3::new(h, h, 0.0),
        Vec3::new(-h, h, 0.0),
    ];
    let t = vec![tri(0, 1, 2, material_id), tri(0, 2, 3, material_id)];
    Scene::new(v, t, vec![], MaterialLibrary::builtin()).expect("valid ground plane")
}

/// Ground plane with a custom single-material library.
pub fn ground_plane_with(half_size: f64, material: Material) -> Scene {
    let base = ground_plane(half_size, 0);
    let lib = MaterialLibrary::new(vec![material]).expect("valid material");
    Scene::new(base.vertices, base.triangles, vec![], lib).expect("valid ground plane")
}

pub fn free_space() -> Scene {
    Scene::new(vec![], vec![], vec![], MaterialLibrary::builtin()).expect("empty scene")
}

/// Axis-aligned box with outward (counter-clockwise from outside) winding.
/// Without the bottom face the box sits on the ground as a building shell.
pub fn box_mesh(min: Vec3, max: Vec3, material_id: u32, with_bottom: bool) -> (Vec<Vec3>, Vec<Triangle>) {
    let (x0, y0, z0) = (min.x, min.y, min.z);
    let (x1, y1, z1) = (max.x, max.y, max.z);
    let v = vec![
        Vec3::new(x0, y0, z0),
        Vec3::new(x1, y0, z0),
        Vec3::new(x1, y1, z0),
        Vec3::new(x0, y1, z0),
        Vec3::new(x0, y0, z1),
        Vec3::new(x1, y0, z1),
        Vec3::new(x1, y1, z1),
        Vec3::new(x0, y1, z1),
    ];
    let m = material_id;
    // Quads listed counter-clockwise seen from outside.
    let mut quads = vec![
        [4, 5, 6, 7], // top
        [0, 1, 5, 4], // south (-y)
        [1, 2, 6, 5], // east (+x)
        [2, 3, 7, 6], // north (+y)
        [3, 0, 4, 7], // west (-x)
    ];
    if with_bottom {
        quads.push([0, 3, 2, 1]);
    }
    let mut t = Vec::new();
    for q in quads {
        t.push(tri(q[0], q[1], q[2], m));
        t.push(tri(q[0], q[2], q[3], m));
    }
    (v, t)
}

fn append(vs: &mut Vec<Vec3>, ts: &mut Vec<Triangle>, (v, t): (Vec<Vec3>, Vec<Triangle>)) {
    let off = vs.len() as u32;
    vs.extend(v);
    ts.extend(t.into_iter().map(|mut x| {
        x.vertices = x.vertices.map(|i| i + off);
        x
    }));
}

/// Campus generator output with the ground truth the generator knows.
#[derive(Debug, Clone)]
pub struct Campus {
    pub scene: Scene,
    /// Building footprints (min/max boxes including height).
    pub buildings: Vec<Aabb>,
    pub expected_triangles: usize,
    /// Convex building edges as unordered endpoint pairs.
    pub expected_edges: Vec<[Vec3; 2]>,
    /// Suggested base-station position (mast in an open area).
    pub tx: Vec3,
}

const CAMPUS_BLOCKS: [(f64, f64, f64, f64, f64, &str); 10] = [
    (-45.0, -45.0, -25.0, -30.0, 18.0, "concrete"),
    (-15.0, -45.0, 5.0, -32.0, 12.0, "brick"),
    (15.0, -45.0, 40.0, -35.0, 24.0, "concrete"),
    (-45.0, -15.0, -32.0, 10.0, 15.0, "concrete"),
    (20.0, -20.0, 35.0, -5.0, 30.0, "concrete"),
    (-20.0, 15.0, -5.0, 30.0, 9.0, "brick"),
    (10.0, 10.0, 25.0, 22.0, 16.0, "concrete"),
    (32.0, 15.0, 46.0, 40.0, 20.0, "concrete"),
    (-45.0, 30.0, -28.0, 46.0, 14.0, "brick"),
    (-2.0, 36.0, 20.0, 47.0, 10.0, "concrete"),
];

/// Ten box buildings on a 240 m ground plane, covering roughly
/// `[-50, 50]^2`. Uses the shipped material library.
pub fn campus() -> Campus {
    campus_with(MaterialLibrary::builtin())
}

pub fn campus_with(lib: MaterialLibrary) -> Campus {
    let ground = lib.id_of("ground").expect("library has ground");
    let mut vs = Vec::new();
    let mut ts = Vec::new();
    let g = ground_plane(120.0, ground);
    append(&mut vs, &mut ts, (g.vertices, g.triangles));
    let mut buildings = Vec::new();
    let mut expected_edges = Vec::new();
    for &(x0, y0, x1, y1, h, mat) in &CAMPUS_BLOCKS {
        let m = lib.id_of(mat).expect("library has building material");
        let (min, max) = (Vec3::new(x0, y0, 0.0), Vec3::new(x1, y1, h));
        append(&mut vs, &mut ts, box_mesh(min, max, m, false));
        buildings.push(Aabb { min, max });
        let c = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
        for k in 0..4 {
            let (a, b) = (c[k], c[(k + 1) % 4]);
            expected_edges.push([Vec3::new(a.0, a.1, h), Vec3::new(b.0, b.1, h)]);
            expected_edges.push([Vec3::new(a.0, a.1, 0.0), Vec3::new(a.0, a.1, h)]);
        }
    }
    let expected_triangles = ts.len();
    let scene = Scene::new(vs, ts, vec![], lib).expect("valid campus");
    Campus { scene, buildings, expected_triangles, expected_edges, tx: Vec3::new(-2.0, -2.0, 20.0) }
}

/// Closed shoebox room `[0,w] x [0,d] x [0,h]`, 12 triangles facing inward.
pub fn room(w: f64, d: f64, h: f64, material: Material) -> Scene {
    let (mut v, t) = box_mesh(Vec3::ZERO, Vec3::new(w, d, h), 0, true);
    // Flip winding so normals face the interior.
    let t: Vec<Triangle> = t
        .into_iter()
        .map(|x| tri(x.vertices[0], x.vertices[2], x.vertices[1], 0))
        .collect();
    v.shrink_to_fit();
    let lib = MaterialLibrary::new(vec![material]).expect("valid material");
    Scene::new(v, t, vec![], lib).expect("valid room")
}

/// Randomised room with transmitter and receiver inside it.
#[derive(Debug, Clone)]
pub struct RoomCase {
    pub scene: Scene,
    pub tx: Vec3,
    pub rx: Vec3,
}

pub fn random_room(seed: u64) -> RoomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(4.0..15.0);
    let d = rng.random_range(4.0..15.0);
    let h = rng.random_range(2.5..5.0);
    let inside = |rng: &mut ChaCha8Rng| {
        Vec3::new(rng.random_range(0.5..w - 0.5), rng.random_range(0.5..d - 0.5), rng.random_range(0.5..h - 0.5))
    };
    let tx = inside(&mut rng);
    let mut rx = inside(&mut rng);
    while rx.distance(tx) < 1.0 {
        rx = inside(&mut rng);
    }
    let mat = Material::new("concrete", 5.24, 0.38, 0.2);
    RoomCase { scene: room(w, d, h, mat), tx, rx }
}

/// Thin metal wedge ("knife edge") whose apex runs along y at height
/// `height` above x = 0, with the given interior angle in degrees. No ground.
pub fn knife_edge(height: f64, half_length: f64, interior_deg: f64) -> Scene {
    let w = height * (interior_deg.to_radians() * 0.5).tan();
    let l = half_length;
    let v = vec![
        Vec3::new(-w, -l, 0.0),
        Vec3::new(-w, l, 0.0),
        Vec3::new(0.0, l, height),
        Vec3::new(0.0, -l, height),
        Vec3::new(w, -l, 0.0),
        Vec3::new(w, l, 0.0),
    ];
    let t = vec![
        // West face, outward normal toward -x.
        tri(0, 3, 2, 0),
        tri(0, 2, 1, 0),
        // East face, outward normal toward +x.
        tri(4, 5, 2, 0),
        tri(4, 2, 3, 0),
    ];
    let lib = MaterialLibrary::new(vec![Material::new("metal", 1.0, 1e7, 0.01)]).unwrap();
    Scene::new(v, t, vec![], lib).expect("valid knife edge")
}

/// Random triangle soup with `n` triangles in a 100 m cube.
pub fn random_soup(n: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::with_capacity(3 * n);
    let mut t = Vec::with_capacity(n);
    while t.len() < n {
        let c = Vec3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(0.0..30.0));
        let mut p = || c + Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (a, b, cc) = (p(), p(), p());
        if 0.5 * (b - a).cross(cc - a).norm() < 1e-3 {
            continue;
        }
        let base = v.len() as u32;
        v.extend([a, b, cc]);
        t.push(tri(base, base + 1, base + 2, 0));
    }
    Scene::new(v, t, vec![], MaterialLibrary::builtin()).expect("valid soup")
}

/// Scripted vehicle-to-vehicle crossing at a three-way intersection.
///
/// The transmitter car drives east along y = -2 at a constant 36 km/h and
/// crosses x = 0 at t = 6 s. The receiver car comes south along x = 0 at
/// 18 km/h, brakes to a stop between t = 1 s and t = 4 s, waits until
/// t = 8 s, then pulls away. A corner block hides the line of sight until
/// about t = 3 s.
pub mod v2v {
    use super::*;

    pub const TX_SPEED: f64 = 10.0;
    pub const RX_SPEED: f64 = 5.0;
    pub const RX_DECEL: f64 = 5.0 / 3.0;
    /// Antenna height above the vehicle origin.
    pub const ANTENNA_HEIGHT: f64 = 1.8;
    pub const DURATION: f64 = 12.0;
    pub const KEYFRAME_STEP: f64 = 0.25;

    pub fn tx_position(t: f64) -> Vec3 {
        Vec3::new(-60.0 + TX_SPEED * t, -2.0, 0.0)
    }

    pub fn rx_position(t: f64) -> Vec3 {
        let t = t.clamp(0.0, DURATION);
        let y = if t <= 1.0 {
            40.0 - RX_SPEED * t
        } else if t <= 4.0 {
            let s = t - 1.0;
            35.0 - RX_SPEED * s + 0.5 * RX_DECEL * s * s
        } else if t <= 8.0 {
            27.5
        } else if t <= 11.0 {
            let s = t - 8.0;
            27.5 - 0.5 * RX_DECEL * s * s
        } else {
            20.0 - RX_SPEED * (t - 11.0)
        };
        Vec3::new(0.0, y, 0.0)
    }

    /// Largest deviation of piecewise-linear keyframes from the braking
    /// parabola: `a dt^2 / 8`.
    pub fn interpolation_bound() -> f64 {
        RX_DECEL * KEYFRAME_STEP * KEYFRAME_STEP / 8.0
    }
}

/// The scripted V2V scene: ground, three corner blocks, and two vehicle
/// bodies as dynamic objects (object 0 = transmitter car, 1 = receiver car).
pub fn v2v_scene() -> Scene {
    let lib = MaterialLibrary::builtin();
    let ground = lib.id_of("ground").unwrap();
    let concrete = lib.id_of("concrete").unwrap();
    let metal = lib.id_of("metal").unwrap();
    let mut vs = Vec::new();
    let mut ts = Vec::new();
    let g = ground_plane(150.0, ground);
    append(&mut vs, &mut ts, (g.vertices, g.triangles));
    for (min, max) in [
        (Vec3::new(-45.0, 12.0, 0.0), Vec3::new(-16.0, 45.0, 12.0)),
        (Vec3::new(8.0, 8.0, 0.0), Vec3::new(40.0, 45.0, 15.0)),
        (Vec3::new(-70.0, -30.0, 0.0), Vec3::new(40.0, -10.0, 10.0)),
    ] {
        append(&mut vs, &mut ts, box_mesh(min, max, concrete, false));
    }
    let car = |yaw: f64, path: fn(f64) -> Vec3| {
        let (v, t) = box_mesh(Vec3::new(-2.25, -0.9, 0.0), Vec3::new(2.25, 0.9, 1.5), metal, true);
        let n = (v2v::DURATION / v2v::KEYFRAME_STEP).round() as usize;
        let keyframes = (0..=n)
            .map(|k| {
                let t = k as f64 * v2v::KEYFRAME_STEP;
                Keyframe { t, pos: path(t), yaw_deg: yaw }
            })
            .collect();
        DynamicObject { vertices: v, triangles: t, keyframes }
    };
    let dynamic = vec![car(0.0, v2v::tx_position), car(-90.0, v2v::rx_position)];
    Scene::new(vs, ts, dynamic, lib).expect("valid v2v scene")
}
