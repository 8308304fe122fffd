//! Quick numerical sanity checks against closed-form results.

use std::f64::consts::{PI, SQRT_2};

use nvltm_core::analysis::lsd;
use nvltm_core::nv_spin::{integrate_rk4, steady_state};
use nvltm_core::synth::add_noise;
use nvltm_core::{Detector, NoiseSpec, Populations, RateModel, TimeTrace, TraceMeta};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn failed(name: &'static str, e: impl std::fmt::Display) -> Self {
        Self::new(name, false, format!("error: {e}"))
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Unit-variance white noise at 400 kHz must have density sqrt(2/fs).
fn white_noise_lsd() -> Check {
    const NAME: &str = "white-noise LSD";
    let fs: f64 = 400e3;
    let expected = (2.0 / fs).sqrt();
    let run = || -> nvltm_core::Result<f64> {
        let zero = TimeTrace::new(vec![0.0; 20 * fs as usize], fs, 0.0, TraceMeta::new("selftest"))?;
        let noisy = add_noise(&zero, &NoiseSpec::white(expected), &Detector::default(), 0.0, 1.0, 11)?;
        lsd(&noisy, 1.0)?.band_mean(1e3, 150e3)
    };
    match run() {
        Ok(v) => Check::new(
            NAME,
            rel(v, expected) < 0.02,
            format!("{v:.4e} V/rtHz, expected {expected:.4e}"),
        ),
        Err(e) => Check::failed(NAME, e),
    }
}

/// A unit sinusoid on the bin grid shows up as 1/sqrt(2) in its bin.
fn sine_bin() -> Check {
    const NAME: &str = "sine-bin";
    let fs: f64 = 400e3;
    let f = 1234.0;
    let samples = (0..4 * fs as usize).map(|n| (2.0 * PI * f * n as f64 / fs).sin()).collect();
    let run = || -> nvltm_core::Result<f64> {
        let trace = TimeTrace::new(samples, fs, 0.0, TraceMeta::new("selftest"))?;
        Ok(lsd(&trace, 1.0)?.at(f))
    };
    let expected = 1.0 / SQRT_2;
    match run() {
        Ok(v) => Check::new(NAME, rel(v, expected) < 0.01, format!("{v:.6} V/rtHz, expected {expected:.6}")),
        Err(e) => Check::failed(NAME, e),
    }
}

/// Algebraic steady state against a long explicit integration.
fn steady_state_ode() -> Check {
    const NAME: &str = "steady-state ODE";
    let m = RateModel::literature(1e6);
    match steady_state(&m) {
        Ok(ss) => {
            let long = integrate_rk4(&m, &Populations::ground(), 1e-3);
            let err = ss.p.iter().zip(&long.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Check::new(NAME, err < 1e-9, format!("max |difference| {err:.2e}"))
        }
        Err(e) => Check::failed(NAME, e),
    }
}

pub fn run_all() -> Vec<Check> {
    vec![white_noise_lsd(), sine_bin(), steady_state_ode()]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_pass() {
        for c in super::run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
