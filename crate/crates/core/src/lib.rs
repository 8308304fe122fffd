//! Digital twin of an NV-diamond laser-threshold magnetometer.
//!
//! The crate is split into forward models and an analysis chain:
//!
//! * [`nv_spin`]: ground-state resonances, six-level rate model, singlet
//!   absorption and ODMR lineshapes.
//! * [`cavity`]: compound-cavity reflectivity, finesse and geometric
//!   absorption enhancement.
//! * [`laser`]: phenomenological P-I curves with a bistable latch, threshold
//!   shifts and contrast versus drive current.
//! * [`synth`]: photodetector time traces for the sweep, AM and FM protocols
//!   with seeded noise.
//! * [`analysis`]: fitting, lock-in demodulation, spectral densities and
//!   sensitivity figures.
//! * [`magnetometry`]: the FM lock-in measurement chain end to end.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cavity;
pub mod constants;
mod error;
pub mod laser;
pub mod magnetometry;
pub mod nv_spin;
pub mod rng;
pub mod synth;

pub use analysis::{FitResult, SpectralDensity, Units};
pub use error::{Error, Result};
pub use laser::{LaserState, MwDrive, PiCurveModel, Pump, ShiftProfile, Thresholds};
pub use nv_spin::{Lineshape, Populations, RateModel, SpinSystem};
pub use synth::{Detector, ModulationSpec, NoiseSpec, TimeTrace, TraceMeta};
