//! Photodetector time-trace synthesis.
//!
//! Protocol synthesizers produce the clean optical power sample by sample
//! (the laser latch is stateful, so generation is sequential); noise is
//! added per chunk from independent substreams. Long traces can be
//! consumed chunk by chunk without holding them in memory.

mod noise;
mod protocols;

pub use noise::{add_noise, drift_psd, NoiseGen, NoiseSpec, RinTable};
pub use protocols::{
    reconstruct_branches, synth_am_odmr, synth_fm_lockin_input, synth_pi_sweep, Acquisition,
    AmSynth, Branches, FieldInjection, FmSynth, PiSweepSynth, Synthesizer, TraceStream,
};

use crate::error::{invalid, Result};

/// Photodiode plus transimpedance amplifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detector {
    /// A/W at the probe wavelength.
    pub responsivity: f64,
    /// Transimpedance gain, V/A.
    pub gain: f64,
}

impl Default for Detector {
    fn default() -> Self {
        Self {
            responsivity: 0.7,
            gain: 5e3,
        }
    }
}

impl Detector {
    pub fn validate(&self) -> Result<()> {
        if !(self.responsivity > 0.0 && self.gain > 0.0) {
            return invalid("detector responsivity and gain must be positive");
        }
        Ok(())
    }

    /// Volts per watt of detected power.
    #[inline]
    pub fn volts_per_watt(&self) -> f64 {
        self.responsivity * self.gain
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModulationSpec {
    /// Microwave on for the first `duty` fraction of each period.
    AmSquare { f_mod: f64, duty: f64 },
    /// Microwave frequency `f_c + deviation·sin(2π f_mod t)`.
    FmSine { f_mod: f64, deviation: f64 },
    /// Drive current ramps from `start` to `start + range` over
    /// `rise_fraction` of the period and back down over the rest.
    CurrentSawtooth {
        f_mod: f64,
        start: f64,
        range: f64,
        rise_fraction: f64,
    },
}

impl ModulationSpec {
    /// The default 37 Hz current sweep from 22 mA to 30 mA.
    pub fn default_sawtooth() -> Self {
        Self::CurrentSawtooth {
            f_mod: 37.0,
            start: 22e-3,
            range: 8e-3,
            rise_fraction: 0.8,
        }
    }

    pub fn f_mod(&self) -> f64 {
        match *self {
            Self::AmSquare { f_mod, .. }
            | Self::FmSine { f_mod, .. }
            | Self::CurrentSawtooth { f_mod, .. } => f_mod,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_mod() > 0.0 && self.f_mod().is_finite()) {
            return invalid("modulation frequency must be positive");
        }
        match *self {
            Self::AmSquare { duty, .. } if !(duty > 0.0 && duty < 1.0) => {
                invalid(format!("duty must lie in (0, 1), got {duty}"))
            }
            Self::FmSine { deviation, .. } if !(deviation >= 0.0) => {
                invalid("FM deviation must be non-negative")
            }
            Self::CurrentSawtooth {
                start,
                range,
                rise_fraction,
                ..
            } if !(range > 0.0 && start.is_finite() && rise_fraction > 0.0 && rise_fraction < 1.0) => {
                invalid("sawtooth needs positive range and rise fraction in (0, 1)")
            }
            _ => Ok(()),
        }
    }

    /// Sawtooth drive current at time `t`; `None` for other kinds.
    pub fn current_at(&self, t: f64) -> Option<f64> {
        match *self {
            Self::CurrentSawtooth {
                f_mod,
                start,
                range,
                rise_fraction,
            } => {
                let u = (t * f_mod).rem_euclid(1.0);
                Some(if u < rise_fraction {
                    start + range * u / rise_fraction
                } else {
                    start + range * (1.0 - (u - rise_fraction) / (1.0 - rise_fraction))
                })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub protocol: String,
    pub modulation: Option<ModulationSpec>,
    pub seed: Option<u64>,
    /// Non-fatal configuration problems noticed during synthesis.
    pub warnings: Vec<String>,
}

impl TraceMeta {
    pub fn new(protocol: impl Into<String>) -> Self {
        Self {
            protocol: protocol.into(),
            modulation: None,
            seed: None,
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTrace {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub t0: f64,
    pub meta: TraceMeta,
}

impl TimeTrace {
    pub fn new(samples: Vec<f64>, fs: f64, t0: f64, meta: TraceMeta) -> Result<Self> {
        let t = Self {
            samples,
            fs,
            t0,
            meta,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return invalid("sample rate must be positive");
        }
        if self.samples.is_empty() {
            return invalid("trace must contain at least one sample");
        }
        if let Some(k) = self.samples.iter().position(|v| !v.is_finite()) {
            return invalid(format!("sample {k} is not finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.fs
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// Number of samples in `duration` seconds at `fs`.
pub(crate) fn sample_count(fs: f64, duration: f64) -> Result<usize> {
    if !(fs > 0.0 && duration > 0.0 && fs.is_finite() && duration.is_finite()) {
        return invalid("sample rate and duration must be positive");
    }
    let n = (fs * duration).round();
    if n < 1.0 {
        return invalid("duration shorter than one sample");
    }
    Ok(n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sawtooth_shape() {
        let m = ModulationSpec::default_sawtooth();
        m.validate().unwrap();
        let period = 1.0 / 37.0;
        assert!((m.current_at(0.0).unwrap() - 22e-3).abs() < 1e-15);
        assert!((m.current_at(0.8 * period).unwrap() - 30e-3).abs() < 1e-9);
        assert!((m.current_at(0.9 * period).unwrap() - 26e-3).abs() < 1e-9);
        assert!((m.current_at(period * 1.4).unwrap() - m.current_at(period * 0.4).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn modulation_validation() {
        assert!(ModulationSpec::AmSquare { f_mod: 131.0, duty: 1.0 }.validate().is_err());
        assert!(ModulationSpec::FmSine { f_mod: 0.0, deviation: 1.0 }.validate().is_err());
        assert!(ModulationSpec::FmSine { f_mod: 1.0, deviation: -1.0 }.validate().is_err());
        assert!(TimeTrace::new(vec![f64::NAN], 1.0, 0.0, TraceMeta::new("x"))
        .is_err());
    }
}
