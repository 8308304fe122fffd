use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Detector, TimeTrace};
use crate::constants::probe_photon_energy;
use crate::error::{invalid, Error, Result};
use crate::rng::{substream, Source, CHUNK_LEN};

/// Laser-noise multiplier versus drive current in units of the reference
/// reverse on-resonance threshold. Linear interpolation between knots;
/// ratios outside the table are an error.
#[derive(Debug, Clone, PartialEq)]
pub struct RinTable {
    knots: Vec<(f64, f64)>,
}

impl RinTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return invalid("rin table needs at least one knot");
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return invalid("rin table ratios must be strictly increasing");
        }
        if knots.iter().any(|&(r, m)| !(r.is_finite() && m >= 0.0 && m.is_finite())) {
            return invalid("rin table entries must be finite with non-negative multipliers");
        }
        Ok(Self { knots })
    }

    /// Multiplier 1 over `[lo, hi]`.
    pub fn flat(lo: f64, hi: f64) -> Self {
        Self {
            knots: vec![(lo, 1.0), (hi, 1.0)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn eval(&self, ratio: f64) -> Result<f64> {
        let (first, last) = (self.knots[0], self.knots[self.knots.len() - 1]);
        if !(ratio >= first.0 && ratio <= last.0) {
            return invalid(format!(
                "current ratio {ratio} outside the rin table range [{}, {}]",
                first.0, last.0
            ));
        }
        let k = self.knots.partition_point(|&(r, _)| r <= ratio);
        if k >= self.knots.len() {
            return Ok(last.1);
        }
        let (r0, m0) = self.knots[k - 1];
        let (r1, m1) = self.knots[k];
        Ok(m0 + (m1 - m0) * (ratio - r0) / (r1 - r0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// Photon shot noise of the detected power.
    pub shot: bool,
    /// White detector noise density, V/√Hz.
    pub electronic_floor: f64,
    /// White relative intensity noise at multiplier 1, 1/√Hz.
    pub rin: f64,
    pub rin_vs_current: RinTable,
    /// Mains pickup amplitude, V.
    pub line_50hz: f64,
    pub line_frequency: f64,
    /// 1/f coefficient `a`: one-sided density `a/√f` V/√Hz.
    pub drift_lowfreq: f64,
}

/// Defaults reproduce the far-above-threshold and near-threshold
/// magnetometer noise levels of the reference device.
pub const DEFAULT_ELECTRONIC_FLOOR: f64 = 1.015e-7;
pub const DEFAULT_RIN: f64 = 1.345e-7;
pub const DEFAULT_RIN_NEAR: f64 = 6.105;

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            shot: true,
            electronic_floor: DEFAULT_ELECTRONIC_FLOOR,
            rin: DEFAULT_RIN,
            rin_vs_current: RinTable::new(vec![
                (0.9, DEFAULT_RIN_NEAR),
                (1.0, DEFAULT_RIN_NEAR),
                (2.0, 1.0),
                (10.0, 1.0),
            ])
            .expect("default table is valid"),
            line_50hz: 2e-6,
            line_frequency: 50.0,
            drift_lowfreq: 1e-7,
        }
    }
}

impl NoiseSpec {
    /// Every source disabled.
    pub fn none() -> Self {
        Self {
            shot: false,
            electronic_floor: 0.0,
            rin: 0.0,
            rin_vs_current: RinTable::flat(0.0, f64::MAX),
            line_50hz: 0.0,
            line_frequency: 50.0,
            drift_lowfreq: 0.0,
        }
    }

    /// Only a white electronic floor of density `e`.
    pub fn white(e: f64) -> Self {
        Self {
            electronic_floor: e,
            ..Self::none()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("electronic_floor", self.electronic_floor),
            ("rin", self.rin),
            ("line_50hz", self.line_50hz),
            ("drift_lowfreq", self.drift_lowfreq),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.line_frequency > 0.0) {
            return invalid("line frequency must be positive");
        }
        Ok(())
    }

    /// True when any random source is active (a seed is then required).
    pub fn is_random(&self) -> bool {
        self.shot || self.electronic_floor > 0.0 || self.rin > 0.0 || self.drift_lowfreq > 0.0
    }

    pub fn is_silent(&self) -> bool {
        !self.is_random() && self.line_50hz == 0.0
    }
}

/// Bank of one-pole sections with octave-spaced corners whose summed
/// spectrum approximates `a²/f`.
#[derive(Debug, Clone)]
struct DriftBank {
    rho: Vec<f64>,
    sigma: Vec<f64>,
    state: Vec<f64>,
}

const DRIFT_F_LO: f64 = 0.01;
const DRIFT_F_HI: f64 = 50e3;

impl DriftBank {
    fn design(amplitude: f64, fs: f64) -> (Vec<f64>, Vec<f64>) {
        let f_hi = DRIFT_F_HI.min(fs / 8.0);
        let mut corners = Vec::new();
        let mut f = DRIFT_F_LO;
        while f <= f_hi {
            corners.push(f);
            f *= 2.0;
        }
        let rho: Vec<f64> = corners.iter().map(|&fc| (-2.0 * PI * fc / fs).exp()).collect();
        // per-section plateau density ∝ 1/f_c
        let mut sigma: Vec<f64> = corners
            .iter()
            .zip(&rho)
            .map(|(&fc, &r)| ((1.0 / fc) * fs * (1.0 - r).powi(2) / 2.0).sqrt())
            .collect();
        let f_ref = 10.0f64.min(fs / 10.0);
        let s = section_psd(&rho, &sigma, fs, f_ref);
        let scale = (amplitude * amplitude / f_ref / s).sqrt();
        sigma.iter_mut().for_each(|x| *x *= scale);
        (rho, sigma)
    }

    fn new(amplitude: f64, fs: f64, seed: u64) -> Self {
        let (rho, sigma) = Self::design(amplitude, fs);
        let mut rng = substream(seed, Source::DriftInit, 0);
        let state = rho
            .iter()
            .zip(&sigma)
            .map(|(&r, &s)| {
                let z: f64 = rng.sample(StandardNormal);
                z * s / (1.0 - r * r).sqrt()
            })
            .collect();
        Self { rho, sigma, state }
    }

    #[inline]
    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let mut sum = 0.0;
        for ((x, &r), &s) in self.state.iter_mut().zip(&self.rho).zip(&self.sigma) {
            let z: f64 = rng.sample(StandardNormal);
            *x = r * *x + s * z;
            sum += *x;
        }
        sum
    }
}

fn section_psd(rho: &[f64], sigma: &[f64], fs: f64, f: f64) -> f64 {
    let w = 2.0 * PI * f / fs;
    rho.iter()
        .zip(sigma)
        .map(|(&r, &s)| 2.0 * s * s / (fs * (1.0 - 2.0 * r * w.cos() + r * r)))
        .sum()
}

/// One-sided PSD (V²/Hz) of the synthesized drift at frequency `f`.
pub fn drift_psd(amplitude: f64, fs: f64, f: f64) -> f64 {
    if amplitude == 0.0 {
        return 0.0;
    }
    let (rho, sigma) = DriftBank::design(amplitude, fs);
    section_psd(&rho, &sigma, fs, f)
}

/// Streaming noise generator. Chunks must be applied in order.
#[derive(Debug, Clone)]
pub struct NoiseGen {
    spec: NoiseSpec,
    fs: f64,
    seed: u64,
    volts_per_watt: f64,
    rin_sigma: f64,
    drift: Option<DriftBank>,
    next_chunk: u64,
}

impl NoiseGen {
    /// `current_ratio` is the drive current over the reference reverse
    /// on-resonance threshold; it selects the laser-noise multiplier.
    pub fn new(
        spec: &NoiseSpec,
        detector: &Detector,
        fs: f64,
        current_ratio: f64,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        detector.validate()?;
        let rin_sigma = if spec.rin > 0.0 {
            spec.rin * spec.rin_vs_current.eval(current_ratio)? * (fs / 2.0).sqrt()
        } else {
            0.0
        };
        let drift = (spec.drift_lowfreq > 0.0).then(|| DriftBank::new(spec.drift_lowfreq, fs, seed));
        Ok(Self {
            spec: spec.clone(),
            fs,
            seed,
            volts_per_watt: detector.volts_per_watt(),
            rin_sigma,
            drift,
            next_chunk: 0,
        })
    }

    /// Adds noise to `out` (clean volts) for chunk `chunk`, given the clean
    /// detected power of each sample.
    pub fn apply(&mut self, chunk: u64, power: &[f64], out: &mut [f64]) -> Result<()> {
        if chunk != self.next_chunk {
            return Err(Error::InvalidInput(format!(
                "noise chunk {chunk} applied out of order (expected {})",
                self.next_chunk
            )));
        }
        if power.len() != out.len() || out.len() > CHUNK_LEN {
            return invalid("noise chunk length mismatch");
        }
        self.next_chunk += 1;
        let start = chunk as usize * CHUNK_LEN;
        let spec = &self.spec;
        if spec.shot {
            let mut rng = substream(self.seed, Source::Shot, chunk);
            let k = probe_photon_energy() * self.fs;
            for (v, &p) in out.iter_mut().zip(power) {
                let z: f64 = rng.sample(StandardNormal);
                *v += self.volts_per_watt * (k * p.max(0.0)).sqrt() * z;
            }
        }
        if spec.electronic_floor > 0.0 {
            let mut rng = substream(self.seed, Source::Electronic, chunk);
            let sigma = spec.electronic_floor * (self.fs / 2.0).sqrt();
            for v in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sigma * z;
            }
        }
        if self.rin_sigma > 0.0 {
            let mut rng = substream(self.seed, Source::Rin, chunk);
            for (v, &p) in out.iter_mut().zip(power) {
                let z: f64 = rng.sample(StandardNormal);
                *v += self.rin_sigma * self.volts_per_watt * p * z;
            }
        }
        if spec.line_50hz > 0.0 {
            let w = spec.line_frequency / self.fs;
            for (n, v) in out.iter_mut().enumerate() {
                let cycles = (w * (start + n) as f64).fract();
                *v += spec.line_50hz * (2.0 * PI * cycles).sin();
            }
        }
        if let Some(bank) = self.drift.as_mut() {
            let mut rng = substream(self.seed, Source::Drift, chunk);
            for v in out.iter_mut() {
                *v += bank.step(&mut rng);
            }
        }
        Ok(())
    }
}

/// Adds noise to a trace assuming constant detected power `mean_power`.
pub fn add_noise(
    trace: &TimeTrace,
    spec: &NoiseSpec,
    detector: &Detector,
    mean_power: f64,
    current_ratio: f64,
    seed: u64,
) -> Result<TimeTrace> {
    trace.validate()?;
    if spec.is_silent() {
        spec.validate()?;
        return Ok(trace.clone());
    }
    let mut gen = NoiseGen::new(spec, detector, trace.fs, current_ratio, seed)?;
    let mut out = trace.clone();
    let power = vec![mean_power; CHUNK_LEN];
    for (k, chunk) in out.samples.chunks_mut(CHUNK_LEN).enumerate() {
        gen.apply(k as u64, &power[..chunk.len()], chunk)?;
    }
    out.meta.seed = Some(seed);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rin_table_interpolates() {
        let t = RinTable::new(vec![(0.9, 3.0), (1.0, 3.0), (2.0, 1.0)]).unwrap();
        assert_eq!(t.eval(0.95).unwrap(), 3.0);
        assert!((t.eval(1.5).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(t.eval(2.0).unwrap(), 1.0);
        assert!(t.eval(2.1).is_err());
        assert!(t.eval(0.5).is_err());
        assert!(RinTable::new(vec![(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn drift_design_follows_inverse_f() {
        let a = 1e-6;
        for f in [0.5, 3.0, 10.0, 100.0, 1000.0] {
            let s = drift_psd(a, 400e3, f);
            let target = a * a / f;
            assert!((s / target - 1.0).abs() < 0.05, "f = {f}: {}", s / target);
        }
    }
}
