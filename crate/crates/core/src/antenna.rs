//! Antenna patterns: complex (theta, phi) field gains per direction.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

#[derive(Debug, thiserror::Error)]
pub enum AntennaError {
    #[error("cannot read antenna pattern {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed antenna pattern: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid antenna pattern: {0}")]
    Invalid(String),
}

/// Spherical unit vectors `(theta_hat, phi_hat)` at direction `d`, with
/// theta measured from +z and phi counter-clockwise from +x.
pub fn spherical_basis(d: Vec3) -> (Vec3, Vec3) {
    let d = d.normalized();
    let theta = d.z.clamp(-1.0, 1.0).acos();
    let phi = d.y.atan2(d.x);
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (Vec3::new(ct * cp, ct * sp, -st), Vec3::new(-sp, cp, 0.0))
}

/// Regular azimuth x elevation lattice of complex `(g_theta, g_phi)` samples.
/// Samples are row-major with elevation as the outer index. Azimuth wraps;
/// elevation must run from -90 to +90 degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPattern {
    pub az_start_deg: f64,
    pub az_step_deg: f64,
    pub az_count: usize,
    pub el_start_deg: f64,
    pub el_step_deg: f64,
    pub el_count: usize,
    /// `[re_theta, im_theta, re_phi, im_phi]` per node.
    pub samples: Vec<[f64; 4]>,
}

impl GridPattern {
    /// Constant pattern over a full-sphere lattice with the given step.
    pub fn uniform(g_theta: Complex64, g_phi: Complex64, step_deg: f64) -> GridPattern {
        let az_count = (360.0 / step_deg).round() as usize;
        let el_count = (180.0 / step_deg).round() as usize + 1;
        GridPattern {
            az_start_deg: 0.0,
            az_step_deg: step_deg,
            az_count,
            el_start_deg: -90.0,
            el_step_deg: step_deg,
            el_count,
            samples: vec![[g_theta.re, g_theta.im, g_phi.re, g_phi.im]; az_count * el_count],
        }
    }

    pub fn node_count(&self) -> usize {
        self.az_count * self.el_count
    }

    pub fn validate(&self) -> Result<(), AntennaError> {
        let bad = |m: &str| Err(AntennaError::Invalid(m.into()));
        if self.az_count == 0 || self.el_count < 2 || !(self.az_step_deg > 0.0) || !(self.el_step_deg > 0.0) {
            return bad("lattice must have positive steps and at least two elevation rows");
        }
        if self.samples.len() != self.node_count() {
            return bad("sample count does not match lattice size");
        }
        if self.samples.iter().flatten().any(|v| !v.is_finite()) {
            return bad("non-finite sample");
        }
        if ((self.az_count as f64) * self.az_step_deg - 360.0).abs() > 1e-6 {
            return bad("azimuth lattice must span exactly 360 degrees");
        }
        let el_end = self.el_start_deg + (self.el_count - 1) as f64 * self.el_step_deg;
        if (self.el_start_deg + 90.0).abs() > 1e-6 || (el_end - 90.0).abs() > 1e-6 {
            return bad("elevation lattice must cover both poles (-90 to 90 degrees)");
        }
        Ok(())
    }

    fn sample(&self, i_az: usize, i_el: usize) -> (Complex64, Complex64) {
        let s = self.samples[i_el * self.az_count + i_az % self.az_count];
        (Complex64::new(s[0], s[1]), Complex64::new(s[2], s[3]))
    }

    /// Bilinear interpolation in (azimuth, elevation) degrees.
    pub fn interpolate(&self, az_deg: f64, el_deg: f64) -> (Complex64, Complex64) {
        let u = (az_deg - self.az_start_deg).rem_euclid(360.0) / self.az_step_deg;
        let v = ((el_deg - self.el_start_deg) / self.el_step_deg).clamp(0.0, (self.el_count - 1) as f64);
        let i0 = (u.floor() as usize).min(self.az_count - 1);
        let fu = (u - i0 as f64).clamp(0.0, 1.0);
        let j0 = (v.floor() as usize).min(self.el_count - 2);
        let fv = v - j0 as f64;
        let (a0, b0) = self.sample(i0, j0);
        let (a1, b1) = self.sample(i0 + 1, j0);
        let (a2, b2) = self.sample(i0, j0 + 1);
        let (a3, b3) = self.sample(i0 + 1, j0 + 1);
        let w = [(1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv];
        (
            a0 * w[0] + a1 * w[1] + a2 * w[2] + a3 * w[3],
            b0 * w[0] + b1 * w[1] + b2 * w[2] + b3 * w[3],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AntennaKind {
    Isotropic,
    VerticalDipole,
    Grid { grid: GridPattern },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaPattern {
    #[serde(flatten)]
    pub kind: AntennaKind,
    /// Boresight (local +x) azimuth in degrees.
    #[serde(default)]
    pub yaw_deg: f64,
    /// Boresight elevation in degrees.
    #[serde(default)]
    pub pitch_deg: f64,
}

#[derive(Serialize, Deserialize)]
struct PatternFile {
    #[serde(default)]
    schema_version: Option<u32>,
    #[serde(flatten)]
    pattern: AntennaPattern,
}

/// Peak directivity of a half-wave dipole, by quadrature of its pattern.
pub fn dipole_directivity() -> f64 {
    static D0: OnceLock<f64> = OnceLock::new();
    *D0.get_or_init(|| {
        // D0 = 2 / integral_0^pi f(theta)^2 sin(theta) dtheta
        let n = 200_000;
        let h = PI / n as f64;
        let mut sum = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) * h;
            let f = (0.5 * PI * t.cos()).cos() / t.sin();
            sum += f * f * t.sin() * h;
        }
        2.0 / sum
    })
}

impl AntennaPattern {
    pub fn isotropic() -> Self {
        AntennaPattern { kind: AntennaKind::Isotropic, yaw_deg: 0.0, pitch_deg: 0.0 }
    }

    pub fn vertical_dipole() -> Self {
        AntennaPattern { kind: AntennaKind::VerticalDipole, yaw_deg: 0.0, pitch_deg: 0.0 }
    }

    pub fn grid(grid: GridPattern) -> Result<Self, AntennaError> {
        grid.validate()?;
        Ok(AntennaPattern { kind: AntennaKind::Grid { grid }, yaw_deg: 0.0, pitch_deg: 0.0 })
    }

    /// Parse a name (`isotropic`, `dipole`, `omni`) or a pattern file path.
    pub fn from_spec(spec: &str) -> Result<Self, AntennaError> {
        match spec {
            "isotropic" | "iso" => Ok(Self::isotropic()),
            "dipole" | "vertical_dipole" | "omni" => Ok(Self::vertical_dipole()),
            path => load_pattern(Path::new(path)),
        }
    }

    pub fn validate(&self) -> Result<(), AntennaError> {
        if !self.yaw_deg.is_finite() || !self.pitch_deg.is_finite() {
            return Err(AntennaError::Invalid("orientation must be finite".into()));
        }
        match &self.kind {
            AntennaKind::Grid { grid } => grid.validate(),
            _ => Ok(()),
        }
    }

    fn is_oriented(&self) -> bool {
        self.yaw_deg != 0.0 || self.pitch_deg != 0.0
    }

    /// Local frame axes expressed in global coordinates.
    fn axes(&self) -> [Vec3; 3] {
        let x = Vec3::from_az_el_deg(self.yaw_deg, self.pitch_deg);
        let z = Vec3::from_az_el_deg(self.yaw_deg, self.pitch_deg + 90.0);
        [x, z.cross(x), z]
    }

    fn local_gain(&self, d: Vec3) -> (Complex64, Complex64) {
        match &self.kind {
            AntennaKind::Isotropic => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            AntennaKind::VerticalDipole => {
                let ct = d.z.clamp(-1.0, 1.0);
                let st = (1.0 - ct * ct).sqrt();
                let g = if st < 1e-9 { 0.0 } else { (0.5 * PI * ct).cos() / st };
                (Complex64::new(dipole_directivity().sqrt() * g, 0.0), Complex64::new(0.0, 0.0))
            }
            AntennaKind::Grid { grid } => {
                let (az, el) = d.to_az_el_deg();
                grid.interpolate(az, el)
            }
        }
    }

    /// Field gain components along the global `(theta_hat, phi_hat)` at
    /// `direction`.
    pub fn gain_at(&self, direction: Vec3, _f: f64) -> (Complex64, Complex64) {
        let d = direction.normalized();
        if !self.is_oriented() {
            return self.local_gain(d);
        }
        let ax = self.axes();
        let local = Vec3::new(d.dot(ax[0]), d.dot(ax[1]), d.dot(ax[2]));
        let (gt, gp) = self.local_gain(local);
        let (lt, lp) = spherical_basis(local);
        // Local basis vectors mapped back to the global frame.
        let to_global = |v: Vec3| ax[0] * v.x + ax[1] * v.y + ax[2] * v.z;
        let (lt, lp) = (to_global(lt), to_global(lp));
        let (t, p) = spherical_basis(d);
        (
            gt * lt.dot(t) + gp * lp.dot(t),
            gt * lt.dot(p) + gp * lp.dot(p),
        )
    }

    /// Field gain as a complex global 3-vector.
    pub fn field_vector(&self, direction: Vec3, f: f64) -> [Complex64; 3] {
        let (gt, gp) = self.gain_at(direction, f);
        let (t, p) = spherical_basis(direction);
        [0, 1, 2].map(|i| gt * t[i] + gp * p[i])
    }

    pub fn to_json(&self) -> String {
        let file = PatternFile { schema_version: Some(1), pattern: self.clone() };
        serde_json::to_string(&file).expect("pattern serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), AntennaError> {
        std::fs::write(path, self.to_json())
            .map_err(|source| AntennaError::Io { path: path.display().to_string(), source })
    }
}

pub fn load_pattern(path: &Path) -> Result<AntennaPattern, AntennaError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| AntennaError::Io { path: path.display().to_string(), source })?;
    let file: PatternFile = serde_json::from_str(&text)?;
    file.pattern.validate()?;
    Ok(file.pattern)
}
