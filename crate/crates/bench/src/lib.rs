//! Fixed inputs shared by the benchmarks.

use nvltm_core::synth::add_noise;
use nvltm_core::{Detector, NoiseSpec, TimeTrace, TraceMeta};

pub const FS: f64 = 400e3;

/// Seeded white noise, `seconds` long at [`FS`].
pub fn white_trace(seconds: f64) -> TimeTrace {
    let n = (seconds * FS) as usize;
    let zero = TimeTrace::new(vec![0.0; n], FS, 0.0, TraceMeta::new("bench")).expect("valid trace");
    add_noise(&zero, &NoiseSpec::white(1e-6), &Detector::default(), 0.0, 1.0, 42).expect("noise")
}
