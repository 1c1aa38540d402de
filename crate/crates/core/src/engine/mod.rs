//! Propagation engine: SBR path search with image refinement, an exact
//! image-method enumerator, UTD edge diffraction, slab transmission,
//! single-bounce diffuse scattering and polarimetric field evaluation.
//!
//! Work is split into a geometry stage ([`link_geometry`]), which depends
//! only on the posed scene and endpoints, and an evaluation stage
//! ([`evaluate_link`]), which applies materials and antennas. Calibration
//! re-runs only the second stage.

pub mod diffraction;
pub mod doppler;
pub mod facets;
pub mod field;
pub mod image;
pub mod refine;
pub mod sbr;
pub mod scattering;

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::antenna::AntennaPattern;
use crate::bvh::BvhIndex;
use crate::geometry::Vec3;
use crate::materials::MaterialLibrary;
use crate::scene::{edges_of_snapshot, DiffractionEdge, Scene, DEFAULT_DIHEDRAL_THRESHOLD_DEG};
use crate::SPEED_OF_LIGHT;

pub use diffraction::diffraction_paths;
pub use doppler::doppler_annotate;
pub use facets::Facets;
pub use field::{compute_field, FieldResult};
pub use image::{enumerate_images, IM_FACET_LIMIT};
pub use refine::refine_specular;
pub use sbr::{launch_directions, trace_sbr};
pub use scattering::scattering_paths;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error("scene too large for IM: {facets} planar facets (limit {limit})")]
    TooLargeForImageMethod { facets: usize, limit: usize },
    #[error("invalid endpoint: {0}")]
    Endpoint(String),
    #[error("frequency must be positive and finite, got {0}")]
    Frequency(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InteractionKind {
    Reflection,
    Transmission,
    Diffraction,
    Scattering,
}

impl InteractionKind {
    pub fn code(self) -> &'static str {
        match self {
            InteractionKind::Reflection => "R",
            InteractionKind::Transmission => "T",
            InteractionKind::Diffraction => "D",
            InteractionKind::Scattering => "S",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        Some(match s {
            "R" => InteractionKind::Reflection,
            "T" => InteractionKind::Transmission,
            "D" => InteractionKind::Diffraction,
            "S" => InteractionKind::Scattering,
            _ => return None,
        })
    }
}

/// One element of a path signature: mechanism, surface (triangle or edge
/// id) and, for scattering, the tile index on that triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SigElem {
    pub kind: InteractionKind,
    pub id: u32,
    pub sub: u32,
}

impl SigElem {
    pub fn new(kind: InteractionKind, id: u32) -> Self {
        SigElem { kind, id, sub: 0 }
    }
}

pub type Signature = Vec<SigElem>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub kind: InteractionKind,
    pub point: Vec3,
    /// Triangle id, or edge id for diffraction.
    pub surface_id: u32,
    /// Scattering tile index; zero otherwise.
    pub sub: u32,
    pub material_id: u32,
}

impl Interaction {
    pub fn sig(&self) -> SigElem {
        SigElem { kind: self.kind, id: self.surface_id, sub: self.sub }
    }
}

pub fn signature_of(interactions: &[Interaction]) -> Signature {
    interactions.iter().map(Interaction::sig).collect()
}

/// A 2x2 Jones matrix in the `(theta_hat, phi_hat)` bases at departure
/// (columns) and arrival (rows).
pub type Jones = [[Complex64; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPath {
    pub interactions: Vec<Interaction>,
    pub path_length: f64,
    pub delay_s: f64,
    /// Departure direction (azimuth, elevation), degrees.
    pub aod: (f64, f64),
    /// Direction the wave arrives from at the receiver, degrees.
    pub aoa: (f64, f64),
    /// Polarimetric transfer including propagation phase, excluding
    /// antennas and spreading.
    pub jones: Jones,
    /// Amplitude spreading factor (1/m for specular paths).
    pub spreading: f64,
    /// Complex amplitude after antennas, for unit transmit power.
    pub amplitude: Complex64,
    pub doppler_hz: f64,
}

impl PropagationPath {
    pub fn signature(&self) -> Signature {
        signature_of(&self.interactions)
    }

    pub fn power(&self) -> f64 {
        self.amplitude.norm_sqr()
    }

    pub fn power_db(&self) -> f64 {
        10.0 * self.power().log10()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub tx: Vec3,
    pub rx: Vec3,
    pub freq_hz: f64,
    pub time_s: f64,
    /// Sorted by delay, then signature.
    pub paths: Vec<PropagationPath>,
}

impl ChannelRealization {
    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(PropagationPath::power).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub n_rays: u32,
    pub max_order: u32,
    pub max_reflections: u32,
    pub max_transmissions: u32,
    pub max_diffractions: u32,
    pub max_scatterings: u32,
    pub rel_power_floor_db: f64,
    pub rx_sphere_scale: f64,
    pub seed: u64,
    pub tile_size_m: f64,
    /// Add exact image-method paths when the scene is small enough.
    pub image_method: bool,
    /// Launch rays from both link ends and merge the candidates.
    pub bidirectional: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            n_rays: 1 << 16,
            max_order: 4,
            max_reflections: 4,
            max_transmissions: 2,
            max_diffractions: 1,
            max_scatterings: 1,
            rel_power_floor_db: -40.0,
            rx_sphere_scale: 1.0,
            seed: 0,
            tile_size_m: 1.0,
            image_method: false,
            bidirectional: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.into()));
        if self.n_rays == 0 {
            return bad("n_rays must be at least 1");
        }
        if self.max_diffractions > 1 {
            return bad("max_diffractions must be 0 or 1");
        }
        if self.max_scatterings > 1 {
            return bad("max_scatterings must be 0 or 1");
        }
        if self.max_reflections > self.max_order || self.max_transmissions > self.max_order {
            return bad("per-mechanism bounds must not exceed max_order");
        }
        if !(self.rel_power_floor_db < 0.0) {
            return bad("rel_power_floor_db must be negative");
        }
        if !(self.rx_sphere_scale > 0.0 && self.rx_sphere_scale.is_finite()) {
            return bad("rx_sphere_scale must be positive");
        }
        if !(self.tile_size_m > 0.0 && self.tile_size_m.is_finite()) {
            return bad("tile_size_m must be positive");
        }
        Ok(())
    }

    /// Mean angular separation of launched rays, radians.
    pub fn ray_spacing(&self) -> f64 {
        (4.0 * std::f64::consts::PI / self.n_rays as f64).sqrt()
    }
}

/// Link end: position (an offset in the object frame when attached to a
/// dynamic object) plus antenna.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub position: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached_to: Option<usize>,
    pub antenna: AntennaPattern,
}

impl Endpoint {
    pub fn new(position: Vec3, antenna: AntennaPattern) -> Self {
        Endpoint { position, attached_to: None, antenna }
    }

    pub fn isotropic(position: Vec3) -> Self {
        Self::new(position, AntennaPattern::isotropic())
    }

    pub fn attached(object: usize, offset: Vec3, antenna: AntennaPattern) -> Self {
        Endpoint { position: offset, attached_to: Some(object), antenna }
    }

    pub fn resolve(&self, prep: &PreparedScene) -> Result<Vec3, EngineError> {
        if !self.position.is_finite() {
            return Err(EngineError::Endpoint("position must be finite".into()));
        }
        match self.attached_to {
            None => Ok(self.position),
            Some(i) => {
                let &(pos, yaw) = prep
                    .poses
                    .get(i)
                    .ok_or_else(|| EngineError::Endpoint(format!("no dynamic object {i}")))?;
                let (s, c) = yaw.to_radians().sin_cos();
                let p = self.position;
                Ok(pos + Vec3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z))
            }
        }
    }
}

/// Scene posed at one instant with its acceleration structures.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub time: f64,
    pub bvh: BvhIndex,
    pub facets: Facets,
    pub edges: Vec<DiffractionEdge>,
    /// Dynamic-object poses `(position, yaw_deg)` at `time`.
    pub poses: Vec<(Vec3, f64)>,
}

impl PreparedScene {
    pub fn new(scene: &Scene, time: f64) -> Self {
        let snap = scene.snapshot(time);
        let edges = edges_of_snapshot(&snap, DEFAULT_DIHEDRAL_THRESHOLD_DEG);
        let bvh = BvhIndex::build(&snap);
        let facets = Facets::build(bvh.triangles());
        let poses = scene.dynamic_objects.iter().map(|d| d.pose_at(time)).collect();
        PreparedScene { time, bvh, facets, edges, poses }
    }
}

/// Per-material flag selecting which surfaces are tiled for scattering.
pub fn scatter_mask(lib: &MaterialLibrary) -> Vec<bool> {
    lib.materials().iter().map(|m| m.scatter_s > 0.0).collect()
}

/// Geometric paths of one link in canonical direction: from the
/// lexicographically smaller endpoint to the larger one.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGeometry {
    pub tx: Vec3,
    pub rx: Vec3,
    /// True when the canonical start is the receiver.
    pub swapped: bool,
    /// Scattering tile edge used to build the paths.
    pub tile_size_m: f64,
    pub paths: Vec<Vec<Interaction>>,
}

impl LinkGeometry {
    pub fn start(&self) -> Vec3 {
        if self.swapped {
            self.rx
        } else {
            self.tx
        }
    }

    pub fn end(&self) -> Vec3 {
        if self.swapped {
            self.tx
        } else {
            self.rx
        }
    }
}

pub(crate) fn reverse_signature(s: &[SigElem]) -> Signature {
    s.iter().rev().copied().collect()
}

/// Refine SBR candidates, add diffraction, scattering and (optionally)
/// image-method paths, and deduplicate by signature. Candidates are given
/// in tx-to-rx order.
pub fn assemble_geometry(
    prep: &PreparedScene,
    tx: Vec3,
    rx: Vec3,
    candidates: impl IntoIterator<Item = Signature>,
    cfg: &EngineConfig,
    scatter: &[bool],
    tx_tiles: Option<&[scattering::TileRef]>,
) -> LinkGeometry {
    let swapped = rx.total_cmp(&tx) == std::cmp::Ordering::Less;
    let (s, d) = if swapped { (rx, tx) } else { (tx, rx) };
    let mut found: BTreeMap<Signature, Vec<Interaction>> = BTreeMap::new();
    for cand in candidates {
        let cand = if swapped { reverse_signature(&cand) } else { cand };
        if let Some(p) = refine_specular(&cand, prep, s, d) {
            found.entry(signature_of(&p)).or_insert(p);
        }
    }
    let im_order = cfg.max_reflections.min(cfg.max_order).min(3);
    if cfg.image_method && prep.facets.len() <= IM_FACET_LIMIT {
        if let Ok(paths) = enumerate_images(prep, s, d, im_order) {
            for p in paths {
                found.entry(signature_of(&p)).or_insert(p);
            }
        }
    }
    if cfg.max_diffractions >= 1 && cfg.max_order >= 1 {
        for p in diffraction_paths(prep, s, d) {
            found.entry(signature_of(&p)).or_insert(p);
        }
    }
    if cfg.max_scatterings >= 1 && cfg.max_order >= 1 {
        // Tiles visible from the transmitter may be shared across links.
        let own;
        let tiles = match tx_tiles {
            Some(t) => t,
            None => {
                own = scattering::visible_tiles(prep, tx, scatter, cfg.tile_size_m);
                &own
            }
        };
        for p in scattering::paths_from_tiles(prep, tiles, tx, rx) {
            let p = if swapped { p.into_iter().rev().collect() } else { p };
            found.entry(signature_of(&p)).or_insert(p);
        }
    }
    LinkGeometry { tx, rx, swapped, tile_size_m: cfg.tile_size_m, paths: found.into_values().collect() }
}

/// Geometry stage of a link.
pub fn link_geometry(prep: &PreparedScene, tx: Vec3, rx: Vec3, cfg: &EngineConfig, scatter: &[bool]) -> LinkGeometry {
    let mut cands = trace_sbr(prep, tx, rx, cfg);
    if cfg.bidirectional {
        cands.extend(trace_sbr(prep, rx, tx, cfg).iter().map(|s| reverse_signature(s)));
    }
    assemble_geometry(prep, tx, rx, cands, cfg, scatter, None)
}

/// Geometry stage for one transmitter and many receivers. The ray tree
/// from `tx` is traced once; the result for each receiver equals
/// [`link_geometry`] for that link.
pub fn link_geometries(prep: &PreparedScene, tx: Vec3, rxs: &[Vec3], cfg: &EngineConfig, scatter: &[bool]) -> Vec<LinkGeometry> {
    use rayon::prelude::*;
    let cands = sbr::trace_candidates(prep, tx, rxs, cfg);
    let tiles = (cfg.max_scatterings >= 1 && cfg.max_order >= 1)
        .then(|| scattering::visible_tiles(prep, tx, scatter, cfg.tile_size_m));
    rxs.par_iter()
        .zip(cands.into_par_iter())
        .map(|(&rx, mut c)| {
            if cfg.bidirectional {
                c.extend(trace_sbr(prep, rx, tx, cfg).iter().map(|s| reverse_signature(s)));
            }
            assemble_geometry(prep, tx, rx, c, cfg, scatter, tiles.as_deref())
        })
        .collect()
}

/// Evaluate one canonical geometric path into a propagation path oriented
/// from tx to rx.
pub fn evaluate_path(
    prep: &PreparedScene,
    lib: &MaterialLibrary,
    geo: &LinkGeometry,
    path: &[Interaction],
    tx_ant: &AntennaPattern,
    rx_ant: &AntennaPattern,
    f: f64,
) -> PropagationPath {
    let fr = compute_field(geo.start(), geo.end(), path, prep, lib, f, geo.tile_size_m);
    let (dyad, k_dep, k_arr, interactions) = if geo.swapped {
        (fr.dyad.transpose(), -fr.k_last, -fr.k_first, path.iter().rev().copied().collect())
    } else {
        (fr.dyad, fr.k_first, fr.k_last, path.to_vec())
    };
    let look = -k_arr;
    let jones = field::jones(&dyad, k_dep, look);
    let (gt_tx, gp_tx) = tx_ant.gain_at(k_dep, f);
    let (gt_rx, gp_rx) = rx_ant.gain_at(look, f);
    let g_tx = [gt_tx, gp_tx];
    let g_rx = [gt_rx, gp_rx];
    let mut pol = Complex64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            pol += g_rx[i] * jones[i][j] * g_tx[j];
        }
    }
    let lambda = SPEED_OF_LIGHT / f;
    let amplitude = pol * (lambda / (4.0 * std::f64::consts::PI) * fr.spreading);
    PropagationPath {
        interactions,
        path_length: fr.length,
        delay_s: fr.length / SPEED_OF_LIGHT,
        aod: k_dep.to_az_el_deg(),
        aoa: look.to_az_el_deg(),
        jones,
        spreading: fr.spreading,
        amplitude,
        doppler_hz: 0.0,
    }
}

/// Drop paths weaker than the strongest by more than `floor_db`.
pub fn apply_power_floor(paths: &mut Vec<PropagationPath>, floor_db: f64) {
    let max = paths.iter().map(PropagationPath::power).fold(0.0, f64::max);
    if max <= 0.0 {
        paths.retain(|p| p.power() > 0.0);
        return;
    }
    let threshold = max * 10f64.powf(floor_db / 10.0);
    paths.retain(|p| p.power() >= threshold && p.power() > 0.0);
}

pub fn sort_paths(paths: &mut [PropagationPath]) {
    paths.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s).then_with(|| a.signature().cmp(&b.signature())));
}

/// Evaluation stage: fields, antennas, power floor and delay sort.
pub fn evaluate_link(
    prep: &PreparedScene,
    lib: &MaterialLibrary,
    geo: &LinkGeometry,
    tx_ant: &AntennaPattern,
    rx_ant: &AntennaPattern,
    f: f64,
    floor_db: f64,
) -> ChannelRealization {
    let mut paths: Vec<PropagationPath> =
        geo.paths.iter().map(|p| evaluate_path(prep, lib, geo, p, tx_ant, rx_ant, f)).collect();
    apply_power_floor(&mut paths, floor_db);
    sort_paths(&mut paths);
    ChannelRealization { tx: geo.tx, rx: geo.rx, freq_hz: f, time_s: prep.time, paths }
}

fn check_frequency(f: f64) -> Result<(), EngineError> {
    if f > 0.0 && f.is_finite() {
        Ok(())
    } else {
        Err(EngineError::Frequency(f))
    }
}

/// Full link pipeline on an already prepared scene.
pub fn simulate_link_prepared(
    prep: &PreparedScene,
    lib: &MaterialLibrary,
    tx: &Endpoint,
    rx: &Endpoint,
    f: f64,
    cfg: &EngineConfig,
) -> Result<ChannelRealization, EngineError> {
    cfg.validate()?;
    check_frequency(f)?;
    let (ptx, prx) = (tx.resolve(prep)?, rx.resolve(prep)?);
    let geo = link_geometry(prep, ptx, prx, cfg, &scatter_mask(lib));
    Ok(evaluate_link(prep, lib, &geo, &tx.antenna, &rx.antenna, f, cfg.rel_power_floor_db))
}

/// Snapshot the scene at `time`, trace and evaluate one link.
pub fn simulate_link(
    scene: &Scene,
    tx: &Endpoint,
    rx: &Endpoint,
    f: f64,
    cfg: &EngineConfig,
    time: f64,
) -> Result<ChannelRealization, EngineError> {
    cfg.validate()?;
    let prep = PreparedScene::new(scene, time);
    simulate_link_prepared(&prep, &scene.materials, tx, rx, f, cfg)
}

#[cfg(test)]
mod tests;
