//! Deterministic ray-tracing radio channel simulator.
//!
//! The crate is organised as an environment twin ([`scene`], [`bvh`]), a
//! propagation engine ([`engine`]) and a channel twin ([`channel`]), with
//! material calibration in [`calibrate`] and task presets in [`profiles`].

pub mod antenna;
pub mod bvh;
pub mod calibrate;
pub mod channel;
pub mod engine;
pub mod fixtures;
pub mod geometry;
pub mod materials;
pub mod profiles;
pub mod scene;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.854_187_812_8e-12;

pub use geometry::Vec3;
