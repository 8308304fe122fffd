//! Phenomenological P-I model of the diamond-coupled ECDL.
//!
//! Above threshold the output is piecewise linear, `P_step + s (I - I_th,f)`,
//! where `P_step` is the power discontinuity at turn-on. A two-state latch
//! reproduces the optical bistability: the laser switches on at the forward
//! threshold and only switches off again below the reverse threshold
//! `I_th,f - ΔI_hyst`. NV absorption enters as a threshold shift (532 nm
//! pump, microwave resonance) and, on resonance, a reduced slope.

use crate::error::{invalid, Error, Result};
use crate::nv_spin::{self, Lineshape, RateModel, SpinSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pump {
    Off,
    On,
}

/// Microwave condition seen by the NV ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MwDrive {
    Off,
    /// The reference on-resonance condition: full reference shift and
    /// `slope_on`.
    OnResonance,
    /// Drive at a frequency (Hz); shift and slope follow the profile.
    At(f64),
}

/// Microwave threshold shift as a function of drive frequency, A.
#[derive(Debug, Clone, PartialEq)]
pub enum ShiftProfile {
    /// Lorentzian lineshape with amplitudes in amperes.
    Lorentzian(Lineshape),
    /// Linear map `kappa · Δalpha` from the rate-model singlet absorption.
    Absorption(AbsorptionShift),
}

impl ShiftProfile {
    /// Zero-field doublet at `D ± E`, scaled so the shift at `D` equals
    /// `center_shift`.
    pub fn zero_field(d: f64, e: f64, fwhm: f64, center_shift: f64) -> Result<Self> {
        let unit = Lineshape::zero_field_doublet(d, e, fwhm, 1.0)?;
        let at_center = unit.eval(d);
        Ok(Self::Lorentzian(unit.scaled(center_shift / at_center)))
    }

    /// One line per ground-state transition of a biased spin system, each
    /// with peak shift `line_shift`.
    pub fn biased(sys: &SpinSystem, fwhm: f64, line_shift: f64) -> Result<Self> {
        let centers: Vec<f64> = nv_spin::sorted_transitions(sys)?
            .into_iter()
            .map(|(f, _)| f)
            .collect();
        let amplitudes = vec![line_shift; centers.len()];
        Ok(Self::Lorentzian(Lineshape::new(centers, fwhm, amplitudes)?))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Lorentzian(shape) => shape.validate(),
            Self::Absorption(a) => a.validate(),
        }
    }

    #[inline]
    pub fn shift(&self, f: f64) -> f64 {
        match self {
            Self::Lorentzian(shape) => shape.eval(f),
            Self::Absorption(a) => a.shift(f),
        }
    }

    /// Same profile with all resonances moved by `df` Hz.
    pub fn shifted(&self, df: f64) -> Self {
        match self {
            Self::Lorentzian(shape) => Self::Lorentzian(shape.shifted(df)),
            Self::Absorption(a) => {
                let mut a = a.clone();
                a.centers.iter_mut().for_each(|c| *c += df);
                Self::Absorption(a)
            }
        }
    }

    /// Largest shift on a grid spanning the resonances (±5 linewidths).
    pub fn peak_shift(&self) -> f64 {
        let (centers, fwhm) = match self {
            Self::Lorentzian(s) => (&s.centers, s.fwhm),
            Self::Absorption(a) => (&a.centers, a.fwhm),
        };
        let lo = centers.iter().copied().fold(f64::INFINITY, f64::min) - 5.0 * fwhm;
        let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 5.0 * fwhm;
        let n = 20_001;
        (0..n)
            .map(|k| self.shift(lo + (hi - lo) * k as f64 / (n - 1) as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Threshold shift built from the six-level model: the microwave mixing
/// rate follows a Lorentzian in frequency, the singlet absorbance follows
/// from the steady state, and the shift is `kappa` times the change in
/// absorbance relative to no microwave drive.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionShift {
    pub rates: RateModel,
    pub centers: Vec<f64>,
    pub fwhm: f64,
    /// Mixing rate at line centre, s^-1.
    pub peak_mw_rate: f64,
    /// Singlet absorption cross-section, cm².
    pub sigma: f64,
    /// NV density, cm^-3.
    pub n_nv: f64,
    /// Path length through the diamond, cm.
    pub path_length: f64,
    /// Threshold shift per unit absorbance, A.
    pub kappa: f64,
}

impl AbsorptionShift {
    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        if !(self.fwhm > 0.0) || self.peak_mw_rate < 0.0 {
            return invalid("absorption shift needs positive width and non-negative drive");
        }
        nv_spin::steady_state(&self.rates.with_mw(0.0))?;
        Ok(())
    }

    pub fn absorbance(&self, f: f64) -> f64 {
        let w = nv_spin::mw_mixing_rate(f, &self.centers, self.fwhm, self.peak_mw_rate);
        self.absorbance_at_rate(w)
    }

    fn absorbance_at_rate(&self, w_mw: f64) -> f64 {
        let p = nv_spin::steady_state(&self.rates.with_mw(w_mw))
            .expect("rate model validated at construction");
        self.sigma * self.n_nv * p.singlet() * self.path_length
    }

    pub fn shift(&self, f: f64) -> f64 {
        self.kappa * (self.absorbance(f) - self.absorbance_at_rate(0.0))
    }

    /// Sets `kappa` so the shift at `f` equals `target`.
    pub fn calibrate_kappa(mut self, f: f64, target: f64) -> Result<Self> {
        let base = self.absorbance_at_rate(0.0);
        let d_alpha = self.absorbance(f) - base;
        if d_alpha.abs() <= 1e-12 * base.abs() {
            return Err(Error::DegenerateModel(
                "microwave drive does not change the singlet absorbance".into(),
            ));
        }
        self.kappa = target / d_alpha;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiCurveModel {
    /// Bare forward threshold (no pump, no microwave), A.
    pub threshold_base: f64,
    /// Above-threshold slope, microwave off, W/A.
    pub slope_off: f64,
    /// Above-threshold slope at the reference on-resonance shift, W/A.
    pub slope_on: f64,
    /// Power discontinuity at forward turn-on, W.
    pub step_power: f64,
    /// Sub-threshold (spontaneous emission) power, W.
    pub floor_power: f64,
    /// Forward minus reverse threshold, A.
    pub hysteresis: f64,
    /// Threshold shift from the 532 nm pump, A.
    pub pump_shift: f64,
    /// Threshold shift at the reference on-resonance condition, A.
    pub reference_shift: f64,
    pub mw_shift: ShiftProfile,
}

/// Zero-field strain parameter used by the default profile, Hz.
pub const DEFAULT_STRAIN_E: f64 = 2.45e6;
/// ODMR linewidth used by the default profile, Hz.
pub const DEFAULT_LINEWIDTH: f64 = 6.6e6;

impl Default for PiCurveModel {
    fn default() -> Self {
        let reference_shift = 0.18e-3;
        Self {
            threshold_base: 26.75e-3,
            // slopes from calibrate_contrast(.., 0.0054, 0.0256)
            slope_off: 0.041_766_413_052_004_11,
            slope_on: 0.041_540_874_421_523_294,
            step_power: 416e-6,
            floor_power: 3.49e-6,
            hysteresis: 3.94e-3,
            pump_shift: 1.33e-3,
            reference_shift,
            mw_shift: ShiftProfile::zero_field(
                crate::constants::ZERO_FIELD_SPLITTING,
                DEFAULT_STRAIN_E,
                DEFAULT_LINEWIDTH,
                reference_shift,
            )
            .expect("default lineshape is valid"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub forward: f64,
    pub reverse: f64,
}

impl PiCurveModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope_off > 0.0 && self.slope_on > 0.0) {
            return invalid("slopes must be positive");
        }
        if self.slope_on > self.slope_off {
            return invalid("slope_on must not exceed slope_off");
        }
        for (name, v) in [
            ("step_power", self.step_power),
            ("floor_power", self.floor_power),
            ("hysteresis", self.hysteresis),
            ("pump_shift", self.pump_shift),
            ("threshold_base", self.threshold_base),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.reference_shift > 0.0) {
            return invalid("reference_shift must be positive");
        }
        self.mw_shift.validate()
    }

    /// Same model with the resonances moved by `df` (e.g. a field change).
    pub fn with_resonance_offset(&self, df: f64) -> Self {
        Self {
            mw_shift: self.mw_shift.shifted(df),
            ..self.clone()
        }
    }

    /// Microwave threshold shift. Without the pump there is no spin
    /// polarisation and the microwave has no effect.
    #[inline]
    pub fn mw_threshold_shift(&self, pump: Pump, mw: MwDrive) -> f64 {
        match (pump, mw) {
            (Pump::Off, _) | (_, MwDrive::Off) => 0.0,
            (Pump::On, MwDrive::OnResonance) => self.reference_shift,
            (Pump::On, MwDrive::At(f)) => self.mw_shift.shift(f),
        }
    }

    #[inline]
    pub fn slope(&self, pump: Pump, mw: MwDrive) -> f64 {
        let fraction = self.mw_threshold_shift(pump, mw) / self.reference_shift;
        self.slope_off - (self.slope_off - self.slope_on) * fraction
    }

    #[inline]
    pub fn thresholds(&self, pump: Pump, mw: MwDrive) -> Thresholds {
        let pump_term = if pump == Pump::On { self.pump_shift } else { 0.0 };
        let forward = self.threshold_base + pump_term + self.mw_threshold_shift(pump, mw);
        Thresholds {
            forward,
            reverse: forward - self.hysteresis,
        }
    }

    /// Reverse threshold with pump on and the reference on-resonance
    /// microwave; the natural unit for drive currents.
    pub fn reference_reverse_on(&self) -> f64 {
        self.thresholds(Pump::On, MwDrive::OnResonance).reverse
    }

    /// Output power of the lasing branch (no latch logic).
    #[inline]
    pub fn lasing_power(&self, current: f64, pump: Pump, mw: MwDrive) -> f64 {
        let th = self.thresholds(pump, mw);
        self.step_power + self.slope(pump, mw) * (current - th.forward)
    }

    /// Asymptotic contrast `1 - slope_on/slope_off` far above threshold.
    pub fn contrast_limit(&self) -> f64 {
        1.0 - self.slope_on / self.slope_off
    }
}

/// Forward and reverse threshold currents for the given condition.
pub fn thresholds(m: &PiCurveModel, pump: Pump, mw: MwDrive) -> Thresholds {
    m.thresholds(pump, mw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Forward,
    Reverse,
}

/// Bistable latch state carried along a current sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserState {
    pub lasing: bool,
    pub direction: SweepDirection,
    last_current: Option<f64>,
}

impl LaserState {
    /// Not lasing, about to sweep up.
    pub fn off() -> Self {
        Self {
            lasing: false,
            direction: SweepDirection::Forward,
            last_current: None,
        }
    }

    /// Lasing, reached from a higher current (reverse sweep).
    pub fn lasing_from_above() -> Self {
        Self {
            lasing: true,
            direction: SweepDirection::Reverse,
            last_current: None,
        }
    }
}

/// Advances the latch to current `current` and returns the output power.
#[inline]
pub fn pi_curve(
    m: &PiCurveModel,
    current: f64,
    state: LaserState,
    pump: Pump,
    mw: MwDrive,
) -> (f64, LaserState) {
    let th = m.thresholds(pump, mw);
    let direction = match state.last_current {
        Some(prev) if current > prev => SweepDirection::Forward,
        Some(prev) if current < prev => SweepDirection::Reverse,
        _ => state.direction,
    };
    let lasing = if state.lasing {
        current >= th.reverse
    } else {
        current >= th.forward
    };
    let power = if lasing {
        m.step_power + m.slope(pump, mw) * (current - th.forward)
    } else {
        m.floor_power
    };
    (
        power,
        LaserState {
            lasing,
            direction,
            last_current: Some(current),
        },
    )
}

/// Threshold change `I_th,f(f) - I_th,f(off)` with the pump on.
pub fn threshold_odmr(m: &PiCurveModel, freqs: &[f64]) -> Vec<(f64, f64)> {
    let off = m.thresholds(Pump::On, MwDrive::Off).forward;
    freqs
        .iter()
        .map(|&f| (f, m.thresholds(Pump::On, MwDrive::At(f)).forward - off))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastVariant {
    /// No step, no bistability, no spontaneous floor.
    Ideal,
    /// The configured step, floor and hysteresis, evaluated on the reverse
    /// (latched) branch.
    Step,
}

/// ODMR contrast `(P_off - P_on)/P_off` between the microwave-off and
/// reference on-resonance branches at drive current `current` (pump on).
pub fn contrast_vs_current(m: &PiCurveModel, current: f64, variant: ContrastVariant) -> Result<f64> {
    let off = MwDrive::Off;
    let on = MwDrive::OnResonance;
    let (p_off, p_on) = match variant {
        ContrastVariant::Ideal => {
            let branch = |mw| {
                let th = m.thresholds(Pump::On, mw);
                (m.slope(Pump::On, mw) * (current - th.forward)).max(0.0)
            };
            (branch(off), branch(on))
        }
        ContrastVariant::Step => {
            let branch = |mw| pi_curve(m, current, LaserState::lasing_from_above(), Pump::On, mw);
            let (p_off, s_off) = branch(off);
            let (p_on, s_on) = branch(on);
            if !s_off.lasing && !s_on.lasing {
                return Err(Error::UndefinedContrast { current });
            }
            (p_off, p_on)
        }
    };
    if p_off <= 0.0 {
        return Err(Error::UndefinedContrast { current });
    }
    Ok((p_off - p_on) / p_off)
}

/// Solves for `slope_off` and `slope_on` so the step model has asymptotic
/// contrast `c_far` and contrast `c_threshold` at the reference reverse
/// on-resonance threshold. Thresholds, step and hysteresis are kept.
pub fn calibrate_contrast(m: &PiCurveModel, c_far: f64, c_threshold: f64) -> Result<PiCurveModel> {
    if !(0.0..1.0).contains(&c_far) || !(0.0..1.0).contains(&c_threshold) {
        return invalid("target contrasts must lie in [0, 1)");
    }
    let ratio = 1.0 - c_far;
    let current = m.reference_reverse_on();
    let below_off = current - m.thresholds(Pump::On, MwDrive::Off).forward;
    let below_on = current - m.thresholds(Pump::On, MwDrive::OnResonance).forward;
    let denom = below_off - ratio * below_on - c_threshold * below_off;
    if !(denom > 0.0) {
        return Err(Error::DegenerateModel(format!(
            "contrast targets ({c_far}, {c_threshold}) unreachable with these thresholds"
        )));
    }
    let slope_off = c_threshold * m.step_power / denom;
    let out = PiCurveModel {
        slope_off,
        slope_on: ratio * slope_off,
        ..m.clone()
    };
    if out.lasing_power(current, Pump::On, MwDrive::OnResonance) <= out.floor_power {
        return Err(Error::DegenerateModel(
            "calibrated reverse branch drops below the spontaneous floor".into(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const MA: f64 = 1e-3;

    #[test]
    fn threshold_ladder() {
        let m = PiCurveModel::default();
        let t = |pump, mw| m.thresholds(pump, mw);
        assert_relative_eq!(t(Pump::Off, MwDrive::Off).forward, 26.75 * MA, max_relative = 1e-12);
        assert_relative_eq!(t(Pump::On, MwDrive::Off).forward, 28.08 * MA, max_relative = 1e-12);
        assert_relative_eq!(
            t(Pump::On, MwDrive::OnResonance).forward,
            28.26 * MA,
            max_relative = 1e-12
        );
        assert_relative_eq!(t(Pump::On, MwDrive::Off).reverse, 24.14 * MA, max_relative = 1e-12);
        // the default profile is normalised at the zero-field centre
        assert_relative_eq!(
            t(Pump::On, MwDrive::At(2.87e9)).forward,
            28.26 * MA,
            max_relative = 1e-12
        );
    }

    #[test]
    fn sweep_day_hysteresis() {
        // the sawtooth run turned on at 28.11 mA; with 3.97 mA hysteresis
        // the reverse edge sits at 24.14 mA
        let m = PiCurveModel {
            threshold_base: 26.78e-3,
            hysteresis: 3.97e-3,
            ..Default::default()
        };
        let th = m.thresholds(Pump::On, MwDrive::Off);
        assert_relative_eq!(th.forward, 28.11 * MA, max_relative = 1e-12);
        assert_relative_eq!(th.reverse, 24.14 * MA, max_relative = 1e-12);
    }

    #[test]
    fn turn_on_jump() {
        let m = PiCurveModel::default();
        let (p_below, s) = pi_curve(&m, 26.74 * MA, LaserState::off(), Pump::Off, MwDrive::Off);
        assert_eq!(p_below, 3.49e-6);
        assert!(!s.lasing);
        let (p_at, s) = pi_curve(&m, 26.75 * MA, s, Pump::Off, MwDrive::Off);
        assert!(s.lasing);
        assert_relative_eq!(p_at, 416e-6, max_relative = 1e-9);
        let (p0, s0) = pi_curve(&m, 0.0, LaserState::off(), Pump::Off, MwDrive::Off);
        assert_eq!(p0, m.floor_power);
        assert!(!s0.lasing);
    }

    #[test]
    fn hysteresis_loop() {
        let m = PiCurveModel::default();
        let grid: Vec<f64> = (0..=2000).map(|k| 20.0 * MA + 12.0 * MA * k as f64 / 2000.0).collect();
        let mut state = LaserState::off();
        let mut up = Vec::new();
        for &i in &grid {
            let (p, s) = pi_curve(&m, i, state, Pump::On, MwDrive::Off);
            up.push(p);
            state = s;
        }
        let mut down = vec![0.0; grid.len()];
        for (k, &i) in grid.iter().enumerate().rev() {
            let (p, s) = pi_curve(&m, i, state, Pump::On, MwDrive::Off);
            if k + 1 < grid.len() {
                assert_eq!(s.direction, SweepDirection::Reverse);
            }
            down[k] = p;
            state = s;
        }
        let on = grid[up.iter().position(|p| *p > 1e-4).unwrap()];
        let off = grid[down.iter().position(|p| *p > 1e-4).unwrap()];
        assert!((on - off - m.hysteresis).abs() < 1e-5);
        let th = m.thresholds(Pump::On, MwDrive::Off);
        let mut area = 0.0;
        for k in 0..grid.len() {
            if grid[k] < th.reverse || grid[k] >= th.forward {
                assert_eq!(up[k], down[k]);
            }
            area += (down[k] - up[k]) * 12.0 * MA / 2000.0;
        }
        assert!(area > 0.0);
        assert!(up.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn threshold_odmr_profile() {
        let m = PiCurveModel::default();
        let freqs: Vec<f64> = (0..=400).map(|k| 2.85e9 + 1e5 * k as f64).collect();
        let prof = threshold_odmr(&m, &freqs);
        let far = threshold_odmr(&m, &[2.5e9])[0].1;
        assert!(far.abs() < 1e-3 * MA);
        // two maxima split by 2E
        let peaks: Vec<f64> = prof
            .windows(3)
            .filter(|w| w[1].1 > w[0].1 && w[1].1 > w[2].1)
            .map(|w| w[1].0)
            .collect();
        assert_eq!(peaks.len(), 2, "{peaks:?}");
        let at_center = threshold_odmr(&m, &[2.87e9])[0].1;
        assert_relative_eq!(at_center, 0.18 * MA, max_relative = 1e-12);
        // proportional to the nv_spin lineshape
        let unit = Lineshape::zero_field_doublet(2.87e9, DEFAULT_STRAIN_E, DEFAULT_LINEWIDTH, 1.0).unwrap();
        let k = at_center / unit.eval(2.87e9);
        for (f, d) in prof {
            assert!((d - k * unit.eval(f)).abs() < 1e-12 * MA);
        }
    }

    #[test]
    fn calibration_reproduces_defaults() {
        let m = PiCurveModel::default();
        let cal = calibrate_contrast(&m, 0.0054, 0.0256).unwrap();
        assert_relative_eq!(cal.slope_off, m.slope_off, max_relative = 1e-12);
        assert_relative_eq!(cal.slope_on, m.slope_on, max_relative = 1e-12);
    }

    #[test]
    fn step_contrast_targets() {
        let m = PiCurveModel::default();
        let r_on = m.reference_reverse_on();
        let c_th = contrast_vs_current(&m, r_on, ContrastVariant::Step).unwrap();
        assert_relative_eq!(c_th, 0.0256, max_relative = 1e-9);
        let c_far = contrast_vs_current(&m, 1e4 * r_on, ContrastVariant::Step).unwrap();
        assert!((c_far - 0.0054).abs() < 1e-5);
        assert_relative_eq!(m.contrast_limit(), 0.0054, max_relative = 1e-12);
    }

    #[test]
    fn ideal_contrast_is_unity_between_thresholds() {
        let m = PiCurveModel::default();
        for i in [28.09, 28.15, 28.2, 28.259] {
            assert_eq!(contrast_vs_current(&m, i * MA, ContrastVariant::Ideal).unwrap(), 1.0);
        }
        assert!(matches!(
            contrast_vs_current(&m, 27.0 * MA, ContrastVariant::Ideal),
            Err(Error::UndefinedContrast { .. })
        ));
        assert!(matches!(
            contrast_vs_current(&m, 20.0 * MA, ContrastVariant::Step),
            Err(Error::UndefinedContrast { .. })
        ));
    }

    #[test]
    fn ideal_limit_closed_form() {
        let m = PiCurveModel::default();
        let f_off = m.thresholds(Pump::On, MwDrive::Off).forward;
        let f_on = m.thresholds(Pump::On, MwDrive::OnResonance).forward;
        let mut last = 1.0;
        for k in 1..200 {
            let i = f_on + 1e-4 * k as f64 * k as f64;
            let c = contrast_vs_current(&m, i, ContrastVariant::Ideal).unwrap();
            let closed = 1.0 - m.slope_on * (i - f_on) / (m.slope_off * (i - f_off));
            assert!((c - closed).abs() < 1e-12);
            assert!(c <= last);
            last = c;
        }
        let big = 1e9;
        let c = contrast_vs_current(&m, big, ContrastVariant::Ideal).unwrap();
        let limit = 1.0 - m.slope_on * (big - f_on) / (m.slope_off * (big - f_off));
        assert!((c - limit).abs() < 1e-12);
        assert!((c - m.contrast_limit()).abs() < 1e-9);
    }

    #[test]
    fn step_never_exceeds_ideal() {
        let m = PiCurveModel::default();
        let f_off = m.thresholds(Pump::On, MwDrive::Off).forward;
        for k in 0..2000 {
            let i = f_off + 1e-6 + 1e-5 * k as f64;
            let ideal = contrast_vs_current(&m, i, ContrastVariant::Ideal).unwrap();
            let step = contrast_vs_current(&m, i, ContrastVariant::Step).unwrap();
            assert!(step <= ideal + 1e-15, "I = {i}");
        }
    }

    #[test]
    fn absorption_profile_calibrates() {
        let shift = AbsorptionShift {
            rates: RateModel::literature(1e6),
            centers: vec![2.87e9 - 2.45e6, 2.87e9 + 2.45e6],
            fwhm: 6.6e6,
            peak_mw_rate: 2e5,
            sigma: 2e-22,
            n_nv: crate::constants::ppm_to_cm3(1.2),
            path_length: 0.025,
            kappa: 1.0,
        }
        .calibrate_kappa(2.87e9, 0.18 * MA)
        .unwrap();
        assert_relative_eq!(shift.shift(2.87e9), 0.18 * MA, max_relative = 1e-9);
        assert!(shift.shift(2.5e9).abs() < 1e-3 * MA);

        let symmetric = AbsorptionShift {
            rates: RateModel {
                k45: 1.1e7,
                k62: 4.8e6,
                ..RateModel::literature(1e6)
            },
            ..shift
        };
        assert!(symmetric.clone().calibrate_kappa(2.87e9, 1e-4).is_err());
    }
}
