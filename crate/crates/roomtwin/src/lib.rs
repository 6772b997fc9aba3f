//! Room-acoustics digital twin toolkit.
//!
//! The crate covers the full measure-model-edit loop for room acoustics over
//! a simulated two-device channel:
//!
//! - [`signals`]: chirp probes, matched filtering, streaming detection,
//!   direct-path picking, and RIR extraction.
//! - [`handshake`]: the two-way acoustic handshake between unsynchronized
//!   devices, session simulation, and clock-offset-free ToF recovery.
//! - [`geometry`]: triangle meshes, PLY I/O, BVH ray casting, and
//!   region-growing surface segmentation.
//! - [`raytrace`]: specular image-source path enumeration and
//!   frequency-domain RIR synthesis from materials and gain patterns.
//! - [`estimate`]: differentiable inverse rendering of per-surface
//!   reflectivities and device gain patterns from measured RIRs.
//! - [`field`]: a surface-emitter acoustic field rendered by first-hit ray
//!   casting with physical delay/decay aggregation.
//! - [`metrics`]: Schroeder decay, T60/C50/EDT, and waveform similarity
//!   metrics.
//! - [`twin`]: material/geometry scene edits with re-rendering, RIR
//!   databases, and nearest-neighbor localization with field augmentation.
//!
//! Every operation is deterministic given its config and seed. See the
//! `examples/` directory for one runnable walkthrough per capability and
//! the `roomtwin` binary for file-based pipelines.

pub mod error;
pub mod estimate;
pub mod fft;
pub mod field;
pub mod geometry;
pub mod handshake;
pub mod io;
pub mod metrics;
pub mod raytrace;
pub mod signals;
pub mod twin;

pub use error::{Error, Result};

/// Working sample rate of the toolkit, Hz. One sample is ~20.8 us.
pub const SAMPLE_RATE: f64 = 48_000.0;

/// Default speed of sound, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
