//! FM lock-in magnetometry: slope calibration, streamed demodulation and
//! field-noise spectra for the sensitive and insensitive operating points.

use std::f64::consts::PI;

use crate::analysis::{
    empirical_sensitivity, laser_noise_metric, lockin_slope, volts_to_tesla, LockIn, LsdAccumulator,
    LsdOptions, SlopeFit, SpectralDensity, Units,
};
use crate::constants::GAMMA_E;
use crate::error::{invalid, Result};
use crate::laser::{PiCurveModel, ShiftProfile, DEFAULT_LINEWIDTH};
use crate::nv_spin::{sorted_transitions, SpinSystem};
use crate::rng::{child_seed, CHUNK_LEN};
use crate::synth::{Acquisition, FieldInjection, FmSynth, ModulationSpec, NoiseSpec, TraceStream};

/// Bias field used for the resolved eight-line spectrum, T.
pub const BIAS_FIELD: f64 = 6e-3;
/// Peak threshold shift of each resolved line, A.
pub const BIASED_LINE_SHIFT: f64 = 0.09e-3;

/// Spin system with a bias field along a generic direction so that all
/// eight transitions are resolved.
pub fn biased_spin_system() -> SpinSystem {
    let dir = nalgebra::Vector3::new(1.0, 0.75, 0.55).normalize();
    SpinSystem {
        e: crate::laser::DEFAULT_STRAIN_E,
        field: dir * BIAS_FIELD,
        ..SpinSystem::default()
    }
}

/// Default P-I model with the biased eight-line microwave profile.
pub fn biased_model() -> Result<PiCurveModel> {
    Ok(PiCurveModel {
        mw_shift: ShiftProfile::biased(&biased_spin_system(), DEFAULT_LINEWIDTH, BIASED_LINE_SHIFT)?,
        ..PiCurveModel::default()
    })
}

/// Lowest-frequency transition of the biased system, Hz.
pub fn default_operating_line() -> Result<f64> {
    Ok(sorted_transitions(&biased_spin_system())?[0].0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmMagnetometer {
    pub model: PiCurveModel,
    /// Drive current, A.
    pub current: f64,
    /// Nominal resonance used as operating point, Hz.
    pub f_line: f64,
    /// Off-resonant microwave frequency for the insensitive branch, Hz.
    pub f_insensitive: f64,
    pub f_mod: f64,
    pub deviation: f64,
    pub enbw: f64,
    /// Lock-in reference phase; `-π/2` picks the `sin` FM component.
    pub phase: f64,
    pub acquisition: Acquisition,
    pub segment_seconds: f64,
    pub gamma_e: f64,
    /// Half-width of the slope scan around `f_line`, Hz.
    pub scan_half_span: f64,
    pub scan_points: usize,
    /// Band averaged for the sensitivity figure, Hz.
    pub band: (f64, f64),
}

impl FmMagnetometer {
    /// Far-above-threshold operation (twice the reference reverse
    /// threshold) with default noise.
    pub fn far_above_threshold() -> Result<Self> {
        let model = biased_model()?;
        Ok(Self {
            current: 2.0 * model.reference_reverse_on(),
            f_line: default_operating_line()?,
            f_insensitive: 1.31e9,
            f_mod: 1371.0,
            deviation: 4e6,
            enbw: 2.6e3,
            phase: -PI / 2.0,
            acquisition: Acquisition {
                fs: 400e3,
                duration: 100.0,
                detector: Default::default(),
                noise: NoiseSpec::default(),
                seed: 1,
            },
            segment_seconds: 1.0,
            gamma_e: GAMMA_E,
            scan_half_span: 1e6,
            scan_points: 41,
            band: (0.0, 500.0),
            model,
        })
    }

    /// Operation on the reverse branch just above the reference reverse
    /// on-resonance threshold.
    pub fn near_threshold() -> Result<Self> {
        let mut m = Self::far_above_threshold()?;
        m.current = m.model.reference_reverse_on();
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        ModulationSpec::FmSine {
            f_mod: self.f_mod,
            deviation: self.deviation,
        }
        .validate()?;
        if !(self.deviation > 0.0) {
            return invalid("FM deviation must be positive for magnetometry");
        }
        if self.scan_points < 5 || !(self.scan_half_span > 0.0) {
            return invalid("slope scan needs at least 5 points and a positive span");
        }
        if !(self.gamma_e > 0.0) {
            return invalid("gamma_e must be positive");
        }
        LockIn::new(self.acquisition.fs, self.f_mod, self.phase, self.enbw)?;
        Ok(())
    }

    fn fm(&self) -> ModulationSpec {
        ModulationSpec::FmSine {
            f_mod: self.f_mod,
            deviation: self.deviation,
        }
    }

    fn lockin(&self) -> Result<LockIn> {
        LockIn::new(self.acquisition.fs, self.f_mod, self.phase, self.enbw)
    }

    /// Averaging window (samples) closest to a whole number of reference
    /// periods, at least `min_samples` long.
    fn period_window(&self, min_samples: usize) -> usize {
        let per = self.acquisition.fs / self.f_mod;
        let k0 = (min_samples as f64 / per).ceil() as usize;
        (k0..k0 + 200)
            .min_by(|&a, &b| {
                let fa = (a as f64 * per - (a as f64 * per).round()).abs();
                let fb = (b as f64 * per - (b as f64 * per).round()).abs();
                fa.total_cmp(&fb)
            })
            .map(|k| (k as f64 * per).round() as usize)
            .expect("non-empty range")
    }

    /// Noiseless steady-state in-phase lock-in output at microwave centre
    /// frequency `f_center`, V.
    pub fn demodulated_level(&self, f_center: f64) -> Result<f64> {
        let mut li = self.lockin()?;
        let fs = self.acquisition.fs;
        let settle = (li.settling_time() * fs).ceil() as usize;
        let window = self.period_window((0.1 * fs) as usize);
        let acq = Acquisition {
            duration: (settle + window) as f64 / fs,
            noise: NoiseSpec::none(),
            ..self.acquisition.clone()
        };
        let synth = FmSynth::new(self.model.clone(), self.current, f_center, self.fm(), None)?;
        let mut stream = TraceStream::new(synth, &acq)?;
        let (mut x, mut y) = (Vec::new(), Vec::new());
        let mut chunk = Vec::with_capacity(CHUNK_LEN);
        while stream.next_chunk(&mut chunk)? {
            li.process(&chunk, &mut x, &mut y);
        }
        let tail = &x[settle..settle + window];
        Ok(tail.iter().sum::<f64>() / window as f64)
    }

    /// Lock-in output across `f_line ± scan_half_span`.
    pub fn slope_scan(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        use rayon::prelude::*;
        let n = self.scan_points;
        let freqs: Vec<f64> = (0..n)
            .map(|k| self.f_line - self.scan_half_span + 2.0 * self.scan_half_span * k as f64 / (n - 1) as f64)
            .collect();
        let values = freqs
            .par_iter()
            .map(|&f| self.demodulated_level(f))
            .collect::<Result<Vec<f64>>>()?;
        Ok((freqs, values))
    }

    /// Lock-in slope (V/Hz) and zero-crossing frequency.
    pub fn slope(&self) -> Result<SlopeFit> {
        let (f, v) = self.slope_scan()?;
        lockin_slope(&f, &v)
    }

    /// Streams a noisy FM trace through the lock-in and returns the
    /// in-phase voltage density plus the raw detector density.
    pub fn branch_spectra(
        &self,
        f_center: f64,
        field: Option<FieldInjection>,
        seed: u64,
    ) -> Result<(SpectralDensity, SpectralDensity)> {
        let mut li = self.lockin()?;
        let fs = self.acquisition.fs;
        let settle = (li.settling_time() * fs).ceil() as usize;
        let acq = Acquisition {
            duration: self.acquisition.duration + settle as f64 / fs,
            seed,
            ..self.acquisition.clone()
        };
        let opts = LsdOptions {
            segment_seconds: self.segment_seconds,
            ..Default::default()
        };
        let mut demod = LsdAccumulator::new(fs, opts)?;
        let mut raw = LsdAccumulator::new(fs, opts)?;
        let synth = FmSynth::new(self.model.clone(), self.current, f_center, self.fm(), field)?;
        let mut stream = TraceStream::new(synth, &acq)?;
        let (mut chunk, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
        let mut seen = 0usize;
        while stream.next_chunk(&mut chunk)? {
            x.clear();
            y.clear();
            li.process(&chunk, &mut x, &mut y);
            let skip = settle.saturating_sub(seen).min(chunk.len());
            demod.push(&x[skip..]);
            raw.push(&chunk[skip..]);
            seen += chunk.len();
        }
        Ok((
            demod.finish(Units::VoltsPerRootHz)?,
            raw.finish(Units::VoltsPerRootHz)?,
        ))
    }

    /// Full measurement: slope calibration, sensitive and insensitive
    /// branches, field densities and the band-averaged sensitivity.
    pub fn run(&self, field: Option<FieldInjection>) -> Result<MagnetometryRun> {
        self.validate()?;
        let slope = self.slope()?;
        let seed = self.acquisition.seed;
        let (sens_v, sens_raw) = self.branch_spectra(slope.crossing, field, child_seed(seed, 0))?;
        let (ins_v, ins_raw) = self.branch_spectra(self.f_insensitive, None, child_seed(seed, 1))?;
        let sensitive = volts_to_tesla(&sens_v, slope.slope, self.gamma_e)?;
        let insensitive = volts_to_tesla(&ins_v, slope.slope, self.gamma_e)?;
        let sensitivity = empirical_sensitivity(&insensitive, self.band)?;
        Ok(MagnetometryRun {
            slope,
            laser_noise: laser_noise_metric(&ins_raw)?,
            sensitive_raw: sens_raw,
            sensitive_volts: sens_v,
            insensitive_volts: ins_v,
            sensitive,
            insensitive,
            sensitivity,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MagnetometryRun {
    pub slope: SlopeFit,
    /// Detector voltage density, 1-5 kHz mean, insensitive branch, V/√Hz.
    pub laser_noise: f64,
    pub sensitive_raw: SpectralDensity,
    pub sensitive_volts: SpectralDensity,
    pub insensitive_volts: SpectralDensity,
    pub sensitive: SpectralDensity,
    pub insensitive: SpectralDensity,
    /// Band-averaged insensitive-branch field density, T/√Hz.
    pub sensitivity: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laser::{MwDrive, Pump};

    /// `√2·⟨P(f_c + dev·sin θ)·sin θ⟩·V/W` by quadrature over one period.
    fn forward_model(m: &FmMagnetometer, f_c: f64) -> f64 {
        let n = 4096;
        let vpw = m.acquisition.detector.volts_per_watt();
        let mut acc = 0.0;
        for k in 0..n {
            let th = 2.0 * PI * k as f64 / n as f64;
            let f = f_c + m.deviation * th.sin();
            acc += m.model.lasing_power(m.current, Pump::On, MwDrive::At(f)) * th.sin();
        }
        std::f64::consts::SQRT_2 * vpw * acc / n as f64
    }

    #[test]
    fn lines_are_resolved() {
        let t = sorted_transitions(&biased_spin_system()).unwrap();
        assert_eq!(t.len(), 8);
        assert!(t.windows(2).all(|w| w[1].0 - w[0].0 > 10e6));
    }

    #[test]
    fn demodulated_level_matches_quadrature() {
        let m = FmMagnetometer::far_above_threshold().unwrap();
        let scale = (0..81)
            .map(|k| forward_model(&m, m.f_line + (k as f64 - 40.0) * 0.25e6).abs())
            .fold(0.0, f64::max);
        for df in [-2e6, -0.5e6, 0.0, 1.3e6] {
            let f = m.f_line + df;
            let sim = m.demodulated_level(f).unwrap();
            let oracle = forward_model(&m, f);
            assert!((sim - oracle).abs() < 1e-3 * scale, "{df}: {sim} vs {oracle} (scale {scale})");
        }
    }

    #[test]
    fn slope_matches_forward_derivative() {
        let m = FmMagnetometer::far_above_threshold().unwrap();
        let fit = m.slope().unwrap();
        let h = 1e3;
        let oracle = (forward_model(&m, fit.crossing + h) - forward_model(&m, fit.crossing - h)) / (2.0 * h);
        assert!((fit.slope / oracle - 1.0).abs() < 0.05, "{} vs {oracle}", fit.slope);
        assert!((fit.crossing - m.f_line).abs() < 0.2e6);
    }
}
