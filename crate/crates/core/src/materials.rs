//! Material library and surface interaction models.
//!
//! Each material carries a relative permittivity and a conductivity (either
//! constant or tabulated over frequency), a slab thickness used for
//! penetration, and the two parameters of a directive diffuse-scattering lobe.
//!
//! Sign convention is `e^{+jωt}`: lossy media have a negative imaginary
//! permittivity and propagating fields carry `e^{-jkr}`.

use std::collections::HashSet;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::{EPS0, SPEED_OF_LIGHT};

const DEFAULT_LIBRARY: &str = include_str!("../data/materials.json");

#[derive(Debug, thiserror::Error)]
pub enum MaterialError {
    #[error("cannot read material library {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed material library: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid material '{name}': {reason}")]
    Invalid { name: String, reason: String },
    #[error("unknown material '{0}'")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub name: String,
    pub eps_r: f64,
    pub sigma: f64,
    pub thickness_m: f64,
    #[serde(default)]
    pub scatter_s: f64,
    #[serde(default = "default_lobe_alpha")]
    pub lobe_alpha: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_r_table: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_table: Option<Vec<[f64; 2]>>,
}

fn default_lobe_alpha() -> u32 {
    4
}

/// Which scalar of a material a calibration parameter drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialField {
    EpsR,
    Sigma,
    ScatterS,
}

impl MaterialField {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eps_r" => Some(Self::EpsR),
            "sigma" => Some(Self::Sigma),
            "scatter_s" => Some(Self::ScatterS),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::EpsR => "eps_r",
            Self::Sigma => "sigma",
            Self::ScatterS => "scatter_s",
        }
    }

    /// Physically admissible range of the field.
    pub fn domain(self) -> (f64, f64) {
        match self {
            Self::EpsR => (1.0, f64::INFINITY),
            Self::Sigma => (0.0, f64::INFINITY),
            Self::ScatterS => (0.0, 1.0),
        }
    }
}

impl Material {
    pub fn new(name: &str, eps_r: f64, sigma: f64, thickness_m: f64) -> Self {
        Material {
            name: name.to_string(),
            eps_r,
            sigma,
            thickness_m,
            scatter_s: 0.0,
            lobe_alpha: 4,
            eps_r_table: None,
            sigma_table: None,
        }
    }

    pub fn with_scattering(mut self, scatter_s: f64, lobe_alpha: u32) -> Self {
        self.scatter_s = scatter_s;
        self.lobe_alpha = lobe_alpha;
        self
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        let bad = |reason: String| MaterialError::Invalid { name: self.name.clone(), reason };
        if !(self.eps_r >= 1.0) {
            return Err(bad(format!("eps_r {} < 1", self.eps_r)));
        }
        if !(self.sigma >= 0.0) {
            return Err(bad(format!("sigma {} < 0", self.sigma)));
        }
        if !(self.thickness_m > 0.0) {
            return Err(bad(format!("thickness {} must be positive", self.thickness_m)));
        }
        if !(0.0..=1.0).contains(&self.scatter_s) {
            return Err(bad(format!("scatter_s {} outside [0,1]", self.scatter_s)));
        }
        if self.lobe_alpha == 0 {
            return Err(bad("lobe_alpha must be a positive integer".into()));
        }
        for (label, table, lo) in [
            ("eps_r_table", &self.eps_r_table, 1.0),
            ("sigma_table", &self.sigma_table, 0.0),
        ] {
            let Some(t) = table else { continue };
            if t.is_empty() {
                return Err(bad(format!("{label} is empty")));
            }
            if t.iter().any(|r| !(r[0] > 0.0) || !(r[1] >= lo)) {
                return Err(bad(format!("{label} has a non-physical entry")));
            }
            if t.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                return Err(bad(format!("{label} frequencies not strictly increasing")));
            }
        }
        Ok(())
    }

    pub fn eps_r_at(&self, f: f64) -> f64 {
        self.eps_r_table.as_deref().map_or(self.eps_r, |t| interp_log_freq(t, f))
    }

    pub fn sigma_at(&self, f: f64) -> f64 {
        self.sigma_table.as_deref().map_or(self.sigma, |t| interp_log_freq(t, f))
    }

    /// Overwrite a calibratable scalar. Any table for that field is dropped,
    /// so the calibrated value applies at every frequency.
    pub fn set_field(&mut self, field: MaterialField, value: f64) {
        match field {
            MaterialField::EpsR => {
                self.eps_r = value;
                self.eps_r_table = None;
            }
            MaterialField::Sigma => {
                self.sigma = value;
                self.sigma_table = None;
            }
            MaterialField::ScatterS => self.scatter_s = value,
        }
    }

    /// Value of a calibratable scalar at frequency `f`.
    pub fn field_at(&self, field: MaterialField, f: f64) -> f64 {
        match field {
            MaterialField::EpsR => self.eps_r_at(f),
            MaterialField::Sigma => self.sigma_at(f),
            MaterialField::ScatterS => self.scatter_s,
        }
    }
}

/// Linear in log-frequency, clamped to the table ends.
fn interp_log_freq(table: &[[f64; 2]], f: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if f <= first[0] {
        return first[1];
    }
    if f >= last[0] {
        return last[1];
    }
    let i = table.partition_point(|r| r[0] <= f);
    let (a, b) = (table[i - 1], table[i]);
    let w = (f.ln() - a[0].ln()) / (b[0].ln() - a[0].ln());
    a[1] + w * (b[1] - a[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema_version: Option<u32>,
    materials: Vec<Material>,
}

/// Dense, id-indexed set of materials with unique names.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialLibrary {
    materials: Vec<Material>,
}

impl MaterialLibrary {
    pub fn new(materials: Vec<Material>) -> Result<Self, MaterialError> {
        let mut names = HashSet::new();
        for m in &materials {
            m.validate()?;
            if !names.insert(m.name.as_str()) {
                return Err(MaterialError::Invalid {
                    name: m.name.clone(),
                    reason: "duplicate material name".into(),
                });
            }
        }
        Ok(MaterialLibrary { materials })
    }

    /// The shipped library, or `$MART_DATA_DIR/materials.json` when present.
    pub fn load_default() -> Result<Self, MaterialError> {
        if let Some(dir) = std::env::var_os("MART_DATA_DIR") {
            let p = Path::new(&dir).join("materials.json");
            if p.exists() {
                return Self::load(&p);
            }
        }
        Ok(Self::builtin())
    }

    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_LIBRARY).expect("shipped material library is valid")
    }

    pub fn load(path: &Path) -> Result<Self, MaterialError> {
        let text = std::fs::read_to_string(path).map_err(|source| MaterialError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, MaterialError> {
        let file: LibraryFile = serde_json::from_str(text)?;
        Self::new(file.materials)
    }

    pub fn to_json(&self) -> String {
        let file = LibraryFile { schema_version: Some(1), materials: self.materials.clone() };
        serde_json::to_string_pretty(&file).expect("library serializes")
    }

    pub fn len(&self) -> usize {
        self.materials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.materials.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Material> {
        self.materials.get(id as usize)
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.materials.iter().position(|m| m.name == name).map(|i| i as u32)
    }

    pub fn set_field(&mut self, name: &str, field: MaterialField, value: f64) -> Result<(), MaterialError> {
        let id = self.id_of(name).ok_or_else(|| MaterialError::Unknown(name.into()))?;
        let m = &mut self.materials[id as usize];
        m.set_field(field, value);
        m.validate()
    }
}

impl std::ops::Index<u32> for MaterialLibrary {
    type Output = Material;
    fn index(&self, id: u32) -> &Material {
        &self.materials[id as usize]
    }
}

/// Complex relative permittivity `eps_r(f) - j sigma(f) / (2 pi f eps0)`.
pub fn complex_permittivity(m: &Material, f: f64) -> Complex64 {
    Complex64::new(m.eps_r_at(f), -m.sigma_at(f) / (2.0 * std::f64::consts::PI * f * EPS0))
}

/// Normal component of the refracted wave vector, normalised by `k0`:
/// `sqrt(eps - sin^2)` on the branch with non-negative real part.
fn refracted_cos(eps: Complex64, cos_i: f64) -> Complex64 {
    let sin2 = 1.0 - cos_i * cos_i;
    (eps - sin2).sqrt()
}

/// Half-space Fresnel reflection for a complex permittivity.
/// Returns `(r_perp, r_par)`; the parallel coefficient uses the
/// magnetic-field reference, so both are `-1/3, +1/3` for `eps = 4` at
/// normal incidence.
pub fn fresnel_from_permittivity(eps: Complex64, cos_i: f64) -> (Complex64, Complex64) {
    let c = cos_i.clamp(0.0, 1.0);
    let q = refracted_cos(eps, c);
    let r_perp = (c - q) / (c + q);
    let r_par = (eps * c - q) / (eps * c + q);
    (r_perp, r_par)
}

pub fn fresnel_coefficients(m: &Material, cos_incidence: f64, f: f64) -> (Complex64, Complex64) {
    fresnel_from_permittivity(complex_permittivity(m, f), cos_incidence)
}

/// Plane-to-plane transmission of a homogeneous slab in air, multiple
/// internal reflections summed in closed form. The reference points share
/// the same tangential position on the two faces, so a vacuum slab yields
/// `exp(-j k0 d cos(theta))`.
pub fn slab_transmission(m: &Material, cos_incidence: f64, f: f64) -> (Complex64, Complex64) {
    let c = cos_incidence.clamp(0.0, 1.0);
    let eps = complex_permittivity(m, f);
    let q = refracted_cos(eps, c);
    let k0 = 2.0 * std::f64::consts::PI * f / SPEED_OF_LIGHT;
    let (r_perp, r_par) = fresnel_from_permittivity(eps, c);
    let j = Complex64::i();
    let one_pass = (-j * k0 * m.thickness_m * q).exp();
    let two_pass = one_pass * one_pass;
    let t = |r: Complex64| (1.0 - r * r) * one_pass / (1.0 - r * r * two_pass);
    (t(r_perp), t(r_par))
}

/// Slab transmission referenced to a straight ray that crosses the slab
/// with no lateral offset, i.e. with the free-space phase of the crossing
/// removed (the ray's path length already accounts for it).
pub fn ray_slab_transmission(m: &Material, cos_incidence: f64, f: f64) -> (Complex64, Complex64) {
    let c = cos_incidence.clamp(0.0, 1.0);
    let k0 = 2.0 * std::f64::consts::PI * f / SPEED_OF_LIGHT;
    let back = Complex64::from_polar(1.0, k0 * m.thickness_m * c);
    let (tp, tl) = slab_transmission(m, c, f);
    (tp * back, tl * back)
}

/// Hemisphere integral of `((1 + cos psi)/2)^alpha` with the lobe centred on
/// the surface normal.
pub fn lobe_normalization(alpha: u32) -> f64 {
    let a = alpha as f64;
    4.0 * std::f64::consts::PI * (1.0 - 0.5f64.powf(a + 1.0)) / (a + 1.0)
}

/// Directive-lobe effective-roughness amplitude. `incident_dir` is the
/// propagation direction of the arriving wave, `scattered_dir` the outgoing
/// direction. Squared amplitude integrates to `scatter_s^2` over the
/// hemisphere for normal incidence and to less for oblique incidence.
pub fn scattering_amplitude(m: &Material, incident_dir: Vec3, scattered_dir: Vec3, normal: Vec3) -> f64 {
    if m.scatter_s <= 0.0 {
        return 0.0;
    }
    // Work on the side the wave arrives from.
    let n = if incident_dir.dot(normal) > 0.0 { -normal } else { normal };
    if scattered_dir.dot(n) <= 0.0 {
        return 0.0;
    }
    let specular = incident_dir.reflect(n);
    let cos_psi = specular.dot(scattered_dir).clamp(-1.0, 1.0);
    let lobe = ((1.0 + cos_psi) * 0.5).powf(m.lobe_alpha as f64 * 0.5);
    m.scatter_s * lobe / lobe_normalization(m.lobe_alpha).sqrt()
}
