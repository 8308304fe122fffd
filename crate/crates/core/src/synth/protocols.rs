use std::f64::consts::PI;

use rayon::prelude::*;

use super::{sample_count, Detector, ModulationSpec, NoiseGen, NoiseSpec, TimeTrace, TraceMeta};
use crate::error::{invalid, Result};
use crate::laser::{pi_curve, LaserState, MwDrive, PiCurveModel, Pump};
use crate::rng::{child_seed, CHUNK_LEN};

/// Sampling, detection and noise settings shared by all protocols.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub fs: f64,
    pub duration: f64,
    pub detector: Detector,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Acquisition {
    /// Noiseless acquisition.
    pub fn clean(fs: f64, duration: f64) -> Self {
        Self {
            fs,
            duration,
            detector: Detector::default(),
            noise: NoiseSpec::none(),
            seed: 0,
        }
    }

    pub fn samples(&self) -> Result<usize> {
        sample_count(self.fs, self.duration)
    }
}

/// Source of clean detected optical power, generated in order.
pub trait Synthesizer {
    /// Fills `power` (W) for samples starting at index `start`.
    fn fill_power(&mut self, start: usize, fs: f64, power: &mut [f64]);

    /// Drive current over the reference reverse on-resonance threshold,
    /// used to pick the laser-noise multiplier.
    fn current_ratio(&self) -> f64;
}

/// Clean synthesis plus detector and noise, one chunk at a time.
pub struct TraceStream<S> {
    source: S,
    noise: Option<NoiseGen>,
    volts_per_watt: f64,
    fs: f64,
    total: usize,
    pos: usize,
    power: Vec<f64>,
}

impl<S: Synthesizer> TraceStream<S> {
    pub fn new(source: S, acq: &Acquisition) -> Result<Self> {
        acq.detector.validate()?;
        acq.noise.validate()?;
        let total = acq.samples()?;
        let noise = if acq.noise.is_silent() {
            None
        } else {
            Some(NoiseGen::new(
                &acq.noise,
                &acq.detector,
                acq.fs,
                source.current_ratio(),
                acq.seed,
            )?)
        };
        Ok(Self {
            source,
            noise,
            volts_per_watt: acq.detector.volts_per_watt(),
            fs: acq.fs,
            total,
            pos: 0,
            power: vec![0.0; CHUNK_LEN],
        })
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Writes the next chunk of volts into `out`; returns false when done.
    pub fn next_chunk(&mut self, out: &mut Vec<f64>) -> Result<bool> {
        if self.pos >= self.total {
            return Ok(false);
        }
        let n = CHUNK_LEN.min(self.total - self.pos);
        let power = &mut self.power[..n];
        self.source.fill_power(self.pos, self.fs, power);
        out.clear();
        out.extend(power.iter().map(|p| p * self.volts_per_watt));
        if let Some(noise) = self.noise.as_mut() {
            noise.apply((self.pos / CHUNK_LEN) as u64, power, out)?;
        }
        self.pos += n;
        Ok(true)
    }

    /// Runs to completion and returns the full trace.
    pub fn collect(mut self, meta: TraceMeta) -> Result<TimeTrace> {
        let mut samples = Vec::with_capacity(self.total);
        let mut buf = Vec::with_capacity(CHUNK_LEN);
        while self.next_chunk(&mut buf)? {
            samples.extend_from_slice(&buf);
        }
        TimeTrace::new(samples, self.fs, 0.0, meta)
    }
}

#[inline]
fn cycles(f: f64, n: usize, fs: f64) -> f64 {
    (f * n as f64 / fs).fract()
}

/// Current sawtooth through the P-I latch.
#[derive(Debug, Clone)]
pub struct PiSweepSynth {
    pub model: PiCurveModel,
    pub sweep: ModulationSpec,
    pub pump: Pump,
    pub mw: MwDrive,
    state: LaserState,
}

impl PiSweepSynth {
    pub fn new(model: PiCurveModel, sweep: ModulationSpec, pump: Pump, mw: MwDrive) -> Result<Self> {
        model.validate()?;
        sweep.validate()?;
        if sweep.current_at(0.0).is_none() {
            return invalid("P-I sweep needs a current sawtooth modulation");
        }
        Ok(Self {
            model,
            sweep,
            pump,
            mw,
            state: LaserState::off(),
        })
    }

    /// Warning text when the sweep does not cross both thresholds.
    pub fn coverage_warning(&self) -> Option<String> {
        let ModulationSpec::CurrentSawtooth { start, range, .. } = self.sweep else {
            return None;
        };
        let th = self.model.thresholds(self.pump, self.mw);
        let hi = start + range;
        (start >= th.reverse || hi < th.forward).then(|| {
            format!(
                "sweep {:.3}-{:.3} mA does not span thresholds {:.3}/{:.3} mA",
                start * 1e3,
                hi * 1e3,
                th.reverse * 1e3,
                th.forward * 1e3
            )
        })
    }
}

impl Synthesizer for PiSweepSynth {
    fn fill_power(&mut self, start: usize, fs: f64, power: &mut [f64]) {
        for (k, p) in power.iter_mut().enumerate() {
            let t = (start + k) as f64 / fs;
            let current = self.sweep.current_at(t).expect("validated sawtooth");
            let (out, state) = pi_curve(&self.model, current, self.state, self.pump, self.mw);
            *p = out;
            self.state = state;
        }
    }

    fn current_ratio(&self) -> f64 {
        let ModulationSpec::CurrentSawtooth { start, range, .. } = self.sweep else {
            unreachable!("validated sawtooth")
        };
        (start + 0.5 * range) / self.model.reference_reverse_on()
    }
}

/// Fixed bias current; microwave toggled by a square wave.
#[derive(Debug, Clone)]
pub struct AmSynth {
    pub model: PiCurveModel,
    pub current: f64,
    pub f_mw: f64,
    pub f_mod: f64,
    pub duty: f64,
    state: LaserState,
}

impl AmSynth {
    pub fn new(model: PiCurveModel, current: f64, f_mw: f64, am: ModulationSpec) -> Result<Self> {
        model.validate()?;
        am.validate()?;
        let ModulationSpec::AmSquare { f_mod, duty } = am else {
            return invalid("AM ODMR needs a square-wave modulation");
        };
        Ok(Self {
            model,
            current,
            f_mw,
            f_mod,
            duty,
            state: LaserState::lasing_from_above(),
        })
    }
}

impl Synthesizer for AmSynth {
    fn fill_power(&mut self, start: usize, fs: f64, power: &mut [f64]) {
        for (k, p) in power.iter_mut().enumerate() {
            let on = cycles(self.f_mod, start + k, fs) < self.duty;
            let mw = if on { MwDrive::At(self.f_mw) } else { MwDrive::Off };
            let (out, state) = pi_curve(&self.model, self.current, self.state, Pump::On, mw);
            *p = out;
            self.state = state;
        }
    }

    fn current_ratio(&self) -> f64 {
        self.current / self.model.reference_reverse_on()
    }
}

/// Sinusoidal magnetic field added along the bias, shifting every
/// resonance by `gamma_e · b(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldInjection {
    /// Peak field, T.
    pub amplitude: f64,
    pub frequency: f64,
    /// Hz/T.
    pub gamma_e: f64,
}

/// Fixed bias current; microwave frequency modulated about `f_center`.
#[derive(Debug, Clone)]
pub struct FmSynth {
    pub model: PiCurveModel,
    pub current: f64,
    pub f_center: f64,
    pub f_mod: f64,
    pub deviation: f64,
    pub field: Option<FieldInjection>,
    state: LaserState,
}

impl FmSynth {
    pub fn new(
        model: PiCurveModel,
        current: f64,
        f_center: f64,
        fm: ModulationSpec,
        field: Option<FieldInjection>,
    ) -> Result<Self> {
        model.validate()?;
        fm.validate()?;
        let ModulationSpec::FmSine { f_mod, deviation } = fm else {
            return invalid("FM lock-in input needs a sinusoidal FM modulation");
        };
        Ok(Self {
            model,
            current,
            f_center,
            f_mod,
            deviation,
            field,
            state: LaserState::lasing_from_above(),
        })
    }

    /// Instantaneous microwave frequency relative to the (field-shifted)
    /// resonances at sample `n`.
    #[inline]
    fn effective_frequency(&self, n: usize, fs: f64) -> f64 {
        let mut f = self.f_center + self.deviation * (2.0 * PI * cycles(self.f_mod, n, fs)).sin();
        if let Some(b) = self.field {
            f -= b.gamma_e * b.amplitude * (2.0 * PI * cycles(b.frequency, n, fs)).sin();
        }
        f
    }
}

impl Synthesizer for FmSynth {
    fn fill_power(&mut self, start: usize, fs: f64, power: &mut [f64]) {
        for (k, p) in power.iter_mut().enumerate() {
            let mw = MwDrive::At(self.effective_frequency(start + k, fs));
            let (out, state) = pi_curve(&self.model, self.current, self.state, Pump::On, mw);
            *p = out;
            self.state = state;
        }
    }

    fn current_ratio(&self) -> f64 {
        self.current / self.model.reference_reverse_on()
    }
}

/// Sawtooth P-I trace. A sweep that misses a threshold still produces a
/// trace, with a warning in its metadata.
pub fn synth_pi_sweep(
    model: &PiCurveModel,
    sweep: ModulationSpec,
    pump: Pump,
    mw: MwDrive,
    acq: &Acquisition,
) -> Result<TimeTrace> {
    let synth = PiSweepSynth::new(model.clone(), sweep, pump, mw)?;
    let mut meta = TraceMeta::new("pi_sweep");
    meta.modulation = Some(sweep);
    meta.seed = acq.noise.is_random().then_some(acq.seed);
    meta.warnings.extend(synth.coverage_warning());
    TraceStream::new(synth, acq)?.collect(meta)
}

/// One AM trace per microwave frequency; trace `k` uses a child seed.
pub fn synth_am_odmr(
    model: &PiCurveModel,
    current: f64,
    f_mw_list: &[f64],
    am: ModulationSpec,
    acq: &Acquisition,
) -> Result<Vec<TimeTrace>> {
    f_mw_list
        .par_iter()
        .enumerate()
        .map(|(k, &f)| {
            let synth = AmSynth::new(model.clone(), current, f, am)?;
            let acq = Acquisition {
                seed: child_seed(acq.seed, k as u64),
                ..acq.clone()
            };
            let mut meta = TraceMeta::new(format!("am_odmr f_mw={f:?}"));
            meta.modulation = Some(am);
            meta.seed = acq.noise.is_random().then_some(acq.seed);
            TraceStream::new(synth, &acq)?.collect(meta)
        })
        .collect()
}

pub fn synth_fm_lockin_input(
    model: &PiCurveModel,
    current: f64,
    f_center: f64,
    fm: ModulationSpec,
    field: Option<FieldInjection>,
    acq: &Acquisition,
) -> Result<TimeTrace> {
    let synth = FmSynth::new(model.clone(), current, f_center, fm, field)?;
    let mut meta = TraceMeta::new(format!("fm_lockin f_center={f_center:?}"));
    meta.modulation = Some(fm);
    meta.seed = acq.noise.is_random().then_some(acq.seed);
    TraceStream::new(synth, acq)?.collect(meta)
}

/// Samples of a sawtooth trace split by sweep direction, as
/// `(current, volts)` pairs in acquisition order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Branches {
    pub forward: Vec<(f64, f64)>,
    pub reverse: Vec<(f64, f64)>,
}

pub fn reconstruct_branches(trace: &TimeTrace, sweep: &ModulationSpec) -> Result<Branches> {
    let ModulationSpec::CurrentSawtooth {
        f_mod,
        rise_fraction,
        ..
    } = *sweep
    else {
        return invalid("branch reconstruction needs a current sawtooth");
    };
    let mut b = Branches::default();
    for (n, &v) in trace.samples.iter().enumerate() {
        let t = trace.time(n);
        let current = sweep.current_at(t).expect("sawtooth");
        if (t * f_mod).rem_euclid(1.0) < rise_fraction {
            b.forward.push((current, v));
        } else {
            b.reverse.push((current, v));
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MA: f64 = 1e-3;

    fn sweep_day_model() -> PiCurveModel {
        PiCurveModel {
            threshold_base: 26.78e-3,
            hysteresis: 3.97e-3,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_branches_match_model() {
        let m = PiCurveModel::default();
        let sweep = ModulationSpec::default_sawtooth();
        let acq = Acquisition::clean(400e3, 1.0 / 37.0);
        let trace = synth_pi_sweep(&m, sweep, Pump::On, MwDrive::Off, &acq).unwrap();
        assert!(trace.meta.warnings.is_empty());
        let b = reconstruct_branches(&trace, &sweep).unwrap();
        let vpw = acq.detector.volts_per_watt();
        // replay each branch through a fresh latch
        let mut state = LaserState::off();
        for &(i, v) in &b.forward {
            let (p, s) = pi_curve(&m, i, state, Pump::On, MwDrive::Off);
            state = s;
            assert!((p * vpw - v).abs() <= 1e-12);
        }
        let mut state = LaserState::lasing_from_above();
        for &(i, v) in &b.reverse {
            let (p, s) = pi_curve(&m, i, state, Pump::On, MwDrive::Off);
            state = s;
            assert!((p * vpw - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn sweep_day_edges() {
        let m = sweep_day_model();
        let sweep = ModulationSpec::default_sawtooth();
        let acq = Acquisition::clean(400e3, 1.0 / 37.0);
        let trace = synth_pi_sweep(&m, sweep, Pump::On, MwDrive::Off, &acq).unwrap();
        let b = reconstruct_branches(&trace, &sweep).unwrap();
        let floor = m.floor_power * acq.detector.volts_per_watt();
        let on = b.forward.iter().find(|(_, v)| *v > floor).unwrap().0;
        let off = b.reverse.iter().find(|(_, v)| *v == floor).unwrap().0;
        assert!((on - 28.11 * MA).abs() < 2e-3 * MA, "{on}");
        assert!((off - 24.14 * MA).abs() < 3e-3 * MA, "{off}");
    }

    #[test]
    fn narrow_sweep_warns() {
        let sweep = ModulationSpec::CurrentSawtooth {
            f_mod: 37.0,
            start: 25e-3,
            range: 2e-3,
            rise_fraction: 0.8,
        };
        let acq = Acquisition::clean(40e3, 0.01);
        let t = synth_pi_sweep(&PiCurveModel::default(), sweep, Pump::On, MwDrive::Off, &acq).unwrap();
        assert_eq!(t.meta.warnings.len(), 1);
    }

    #[test]
    fn seeded_traces_repeat() {
        let acq = Acquisition {
            noise: NoiseSpec::default(),
            seed: 11,
            ..Acquisition::clean(400e3, 0.4)
        };
        let m = PiCurveModel::default();
        let sweep = ModulationSpec::default_sawtooth();
        let a = synth_pi_sweep(&m, sweep, Pump::On, MwDrive::Off, &acq).unwrap();
        let b = synth_pi_sweep(&m, sweep, Pump::On, MwDrive::Off, &acq).unwrap();
        assert!(a.samples.iter().zip(&b.samples).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = synth_pi_sweep(&m, sweep, Pump::On, MwDrive::Off, &Acquisition { seed: 12, ..acq }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn am_levels_and_duty() {
        let m = PiCurveModel::default();
        let am = ModulationSpec::AmSquare { f_mod: 131.0, duty: 0.3 };
        let acq = Acquisition::clean(400e3, 1.0 / 131.0);
        let current = 2.0 * m.reference_reverse_on();
        let traces = synth_am_odmr(&m, current, &[2.5e9, 2.87e9], am, &acq).unwrap();
        // Lorentzian tails: far off resonance the two levels agree to 1e-4
        let far = &traces[0].samples;
        assert!(far.iter().all(|v| (v / far[0] - 1.0).abs() < 1e-4));

        let s = &traces[1].samples;
        let v0 = s.iter().copied().fold(f64::MIN, f64::max);
        let v1 = s.iter().copied().fold(f64::MAX, f64::min);
        assert!(s.iter().all(|v| *v == v0 || *v == v1));
        let on = s.iter().filter(|v| **v == v1).count();
        assert!((on as f64 - 0.3 * 400e3 / 131.0).abs() <= 1.0, "{on} of {}", s.len());
    }

    #[test]
    fn fm_without_deviation_is_constant() {
        let m = PiCurveModel::default();
        let fm = ModulationSpec::FmSine { f_mod: 1371.0, deviation: 0.0 };
        let t = synth_fm_lockin_input(&m, 48e-3, 2.869e9, fm, None, &Acquisition::clean(400e3, 0.01)).unwrap();
        assert!(t.samples.iter().all(|v| *v == t.samples[0]));
    }
}
