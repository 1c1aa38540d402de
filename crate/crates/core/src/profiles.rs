//! Task presets: offline (high accuracy, batch) and online (low latency).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, EngineError};

pub const PRESET_NAMES: [&str; 2] = ["offline", "online"];

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("unknown profile {0:?}; valid names: offline, online, custom")]
    Unknown(String),
    #[error("override exceeds the {profile} preset: {field} = {value} > {limit} (use the custom profile)")]
    Bound { profile: String, field: &'static str, value: u32, limit: u32 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("profile file: {0}")]
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub name: String,
    pub engine: EngineConfig,
    pub grid_step_default: f64,
    /// Expected wall-clock per link, seconds.
    pub latency_budget_hint: f64,
    pub mechanisms: Vec<String>,
}

fn mechanisms(cfg: &EngineConfig) -> Vec<String> {
    let mut m = vec!["los".to_string()];
    for (on, name) in [
        (cfg.max_reflections > 0, "reflection"),
        (cfg.max_transmissions > 0, "transmission"),
        (cfg.max_diffractions > 0, "diffraction"),
        (cfg.max_scatterings > 0, "scattering"),
    ] {
        if on {
            m.push(name.to_string());
        }
    }
    m
}

pub fn builtin(name: &str) -> Result<TaskProfile, ProfileError> {
    let (engine, step, budget) = match name {
        "offline" => (
            EngineConfig {
                n_rays: 1 << 20,
                max_order: 4,
                max_reflections: 4,
                max_transmissions: 2,
                max_diffractions: 1,
                max_scatterings: 1,
                rel_power_floor_db: -40.0,
                rx_sphere_scale: 1.0,
                seed: 0,
                tile_size_m: 1.0,
                image_method: true,
                bidirectional: false,
            },
            1.0,
            1.0,
        ),
        "online" => (
            EngineConfig {
                n_rays: 1 << 14,
                max_order: 3,
                max_reflections: 3,
                max_transmissions: 1,
                max_diffractions: 1,
                max_scatterings: 0,
                rel_power_floor_db: -25.0,
                rx_sphere_scale: 1.0,
                seed: 0,
                tile_size_m: 1.0,
                image_method: false,
                bidirectional: true,
            },
            5.0,
            0.1,
        ),
        other => return Err(ProfileError::Unknown(other.to_string())),
    };
    Ok(TaskProfile { name: name.to_string(), mechanisms: mechanisms(&engine), engine, grid_step_default: step, latency_budget_hint: budget })
}

/// Per-point evaluation settings for calibration: offline with 2^16 rays.
pub fn calibration_engine() -> EngineConfig {
    EngineConfig { n_rays: 1 << 16, ..builtin("offline").expect("preset").engine }
}

/// Field-wise overrides; absent fields keep the preset value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub n_rays: Option<u32>,
    pub max_order: Option<u32>,
    pub max_reflections: Option<u32>,
    pub max_transmissions: Option<u32>,
    pub max_diffractions: Option<u32>,
    pub max_scatterings: Option<u32>,
    pub rel_power_floor_db: Option<f64>,
    pub rx_sphere_scale: Option<f64>,
    pub seed: Option<u64>,
    pub tile_size_m: Option<f64>,
    pub image_method: Option<bool>,
    pub bidirectional: Option<bool>,
}

impl Overrides {
    fn apply(&self, c: &mut EngineConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(
            n_rays,
            max_order,
            max_reflections,
            max_transmissions,
            max_diffractions,
            max_scatterings,
            rel_power_floor_db,
            rx_sphere_scale,
            seed,
            tile_size_m,
            image_method,
            bidirectional
        );
    }
}

/// Preset plus overrides. Named presets keep their interaction bounds;
/// `custom` starts from the offline preset and only requires a valid
/// configuration.
pub fn resolve(name: &str, overrides: &Overrides) -> Result<EngineConfig, ProfileError> {
    let custom = name == "custom";
    let base = builtin(if custom { "offline" } else { name })?.engine;
    let mut cfg = base.clone();
    overrides.apply(&mut cfg);
    if !custom {
        let checks = [
            ("max_order", cfg.max_order, base.max_order),
            ("max_reflections", cfg.max_reflections, base.max_reflections),
            ("max_transmissions", cfg.max_transmissions, base.max_transmissions),
            ("max_diffractions", cfg.max_diffractions, base.max_diffractions),
            ("max_scatterings", cfg.max_scatterings, base.max_scatterings),
        ];
        for (field, value, limit) in checks {
            if value > limit {
                return Err(ProfileError::Bound { profile: name.to_string(), field, value, limit });
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Override file: `{"profile": "online", "overrides": {"n_rays": 4096}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub profile: String,
    #[serde(default)]
    pub overrides: Overrides,
}

impl ProfileFile {
    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProfileError::File(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ProfileError::File(e.to_string()))
    }

    pub fn resolve(&self) -> Result<EngineConfig, ProfileError> {
        resolve(&self.profile, &self.overrides)
    }
}
