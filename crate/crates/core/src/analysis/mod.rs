//! Data reduction: fits, lock-in demodulation, spectral densities and
//! sensitivity figures.

mod lm;
mod lockin;
mod lorentz;
mod spectral;
mod threshold;

pub use lm::{levenberg_marquardt, LmOptions, LmOutcome};
pub use lockin::{lockin_demodulate, lockin_demodulate_iq, cascade_enbw, LockIn, LOCKIN_STAGES};
pub use lorentz::{fit_lorentzian, lorentzian_sum};
pub use spectral::{lsd, lsd_with, LsdAccumulator, LsdOptions, Window};
pub use threshold::fit_threshold;

use crate::error::{Error, Result};
use crate::synth::{ModulationSpec, TimeTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub unit: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<Param>,
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Value of a named parameter; panics if absent.
    pub fn value(&self, name: &str) -> f64 {
        self.param(name)
            .unwrap_or_else(|| panic!("fit has no parameter {name}"))
            .value
    }

    pub fn stderr(&self, name: &str) -> f64 {
        self.param(name)
            .unwrap_or_else(|| panic!("fit has no parameter {name}"))
            .stderr
    }

    /// Replaces the generic `value` unit with `unit`.
    pub fn with_value_unit(mut self, unit: &str) -> Self {
        for p in &mut self.params {
            p.unit = p.unit.replace("value", unit);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Units {
    VoltsPerRootHz,
    TeslaPerRootHz,
}

impl Units {
    pub fn symbol(self) -> &'static str {
        match self {
            Self::VoltsPerRootHz => "V/rtHz",
            Self::TeslaPerRootHz => "T/rtHz",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    pub units: Units,
    pub n_segments: usize,
}

impl SpectralDensity {
    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// Arithmetic mean of the density over `[lo, hi]`.
    pub fn band_mean(&self, lo: f64, hi: f64) -> Result<f64> {
        let top = self.freqs.last().copied().unwrap_or(0.0);
        if !(lo <= hi) || lo < 0.0 || hi > top {
            return Err(Error::InvalidBand {
                lo,
                hi,
                reason: format!("outside the density range [0, {top}] Hz"),
            });
        }
        let (sum, n) = self
            .freqs
            .iter()
            .zip(&self.values)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        if n == 0 {
            return Err(Error::InvalidBand {
                lo,
                hi,
                reason: "no frequency bins in band".into(),
            });
        }
        Ok(sum / n as f64)
    }

    /// Density at the bin nearest `f`.
    pub fn at(&self, f: f64) -> f64 {
        let k = (f / self.bin_width()).round() as usize;
        self.values[k.min(self.values.len() - 1)]
    }
}

/// Converts a voltage density to field units using the lock-in slope
/// (V/Hz) and gyromagnetic ratio (Hz/T).
pub fn volts_to_tesla(sd: &SpectralDensity, slope: f64, gamma_e: f64) -> Result<SpectralDensity> {
    if sd.units != Units::VoltsPerRootHz {
        return Err(Error::InvalidInput("expected a voltage density".into()));
    }
    let k = slope.abs() * gamma_e;
    if k == 0.0 || !k.is_finite() {
        return Err(Error::DivisionByZero("lock-in slope times gamma_e".into()));
    }
    Ok(SpectralDensity {
        values: sd.values.iter().map(|v| v / k).collect(),
        units: Units::TeslaPerRootHz,
        ..sd.clone()
    })
}

/// Inverse of [`volts_to_tesla`].
pub fn tesla_to_volts(sd: &SpectralDensity, slope: f64, gamma_e: f64) -> Result<SpectralDensity> {
    if sd.units != Units::TeslaPerRootHz {
        return Err(Error::InvalidInput("expected a field density".into()));
    }
    let k = slope.abs() * gamma_e;
    if k == 0.0 || !k.is_finite() {
        return Err(Error::DivisionByZero("lock-in slope times gamma_e".into()));
    }
    Ok(SpectralDensity {
        values: sd.values.iter().map(|v| v * k).collect(),
        units: Units::VoltsPerRootHz,
        ..sd.clone()
    })
}

/// Mean field density over a band, T/√Hz.
pub fn empirical_sensitivity(sd: &SpectralDensity, band: (f64, f64)) -> Result<f64> {
    if sd.units != Units::TeslaPerRootHz {
        return Err(Error::InvalidInput("expected a field density".into()));
    }
    sd.band_mean(band.0, band.1)
}

/// Mean voltage density between 1 and 5 kHz.
pub fn laser_noise_metric(sd: &SpectralDensity) -> Result<f64> {
    if sd.units != Units::VoltsPerRootHz {
        return Err(Error::InvalidInput("expected a voltage density".into()));
    }
    sd.band_mean(1e3, 5e3)
}

/// Shot-noise-limited sensitivity of a Lorentzian ODMR line in the
/// small-contrast limit, T/√Hz.
pub fn shot_noise_sensitivity(fwhm: f64, contrast: f64, rate: f64, gamma_e: f64) -> Result<f64> {
    if contrast == 0.0 || rate == 0.0 {
        return Err(Error::DivisionByZero("contrast and photon rate must be non-zero".into()));
    }
    if !(fwhm > 0.0 && contrast > 0.0 && rate > 0.0 && gamma_e > 0.0) {
        return Err(Error::InvalidInput("linewidth, contrast, rate and gamma_e must be positive".into()));
    }
    Ok(4.0 / (3.0 * 3f64.sqrt()) / gamma_e * fwhm / (contrast * rate.sqrt()))
}

/// Photon-rate ratio `R_a/R_b` implied by two shot-noise sensitivities
/// at contrasts `c_a`, `c_b` (same linewidth).
pub fn implied_rate_ratio(eta_a: f64, eta_b: f64, c_a: f64, c_b: f64) -> Result<f64> {
    if !(eta_a > 0.0 && eta_b > 0.0 && c_a > 0.0 && c_b > 0.0) {
        return Err(Error::InvalidInput("sensitivities and contrasts must be positive".into()));
    }
    Ok((eta_b / eta_a * c_b / c_a).powi(2))
}

/// ODMR contrast `(v_off - v_on)/v_off`.
pub fn odmr_contrast(v_on: f64, v_off: f64) -> Result<f64> {
    if !(v_off > 0.0) {
        return Err(Error::InvalidInput(format!("v_off must be positive, got {v_off}")));
    }
    Ok((v_off - v_on) / v_off)
}

/// Mean voltage during the microwave-off and microwave-on parts of an AM
/// trace, `(v_off, v_on)`.
pub fn am_levels(trace: &TimeTrace, am: &ModulationSpec) -> Result<(f64, f64)> {
    let ModulationSpec::AmSquare { f_mod, duty } = *am else {
        return Err(Error::InvalidInput("AM level extraction needs a square-wave spec".into()));
    };
    let (mut on, mut n_on, mut off, mut n_off) = (0.0, 0usize, 0.0, 0usize);
    for (n, &v) in trace.samples.iter().enumerate() {
        if (f_mod * n as f64 / trace.fs).fract() < duty {
            on += v;
            n_on += 1;
        } else {
            off += v;
            n_off += 1;
        }
    }
    if n_on == 0 || n_off == 0 {
        return Err(Error::InsufficientData("trace shorter than one AM half-cycle".into()));
    }
    Ok((off / n_off as f64, on / n_on as f64))
}

/// Linear fit of lock-in output around its central zero crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    /// V/Hz.
    pub slope: f64,
    /// Hz.
    pub crossing: f64,
}

/// Fits a line to the central 30% of points around the zero crossing
/// nearest the middle of the sweep.
pub fn lockin_slope(freqs: &[f64], values: &[f64]) -> Result<SlopeFit> {
    let n = freqs.len();
    if n != values.len() || n < 2 {
        return Err(Error::InsufficientData("need at least two matching points".into()));
    }
    let mid = (n - 1) as f64 / 2.0;
    let crossing = (0..n - 1)
        .filter(|&k| values[k] == 0.0 || values[k].signum() != values[k + 1].signum() || values[k + 1] == 0.0)
        .min_by(|&a, &b| {
            let da = (a as f64 + 0.5 - mid).abs();
            let db = (b as f64 + 0.5 - mid).abs();
            da.total_cmp(&db)
        })
        .ok_or(Error::NoCrossing)?;
    let half = ((0.3 * n as f64).round() as usize).max(2) / 2;
    let lo = crossing.saturating_sub(half.saturating_sub(1));
    let hi = (crossing + 1 + half).min(n - 1);
    let (lo, hi) = if hi - lo < 1 { (crossing, crossing + 1) } else { (lo, hi) };
    let xs = &freqs[lo..=hi];
    let ys = &values[lo..=hi];
    let m = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all frequencies in the window coincide".into()));
    }
    let slope = sxy / sxx;
    if slope == 0.0 {
        return Err(Error::NoCrossing);
    }
    Ok(SlopeFit {
        slope,
        crossing: xm - ym / slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(v: f64, units: Units) -> SpectralDensity {
        SpectralDensity {
            freqs: (0..=1000).map(|k| k as f64 * 10.0).collect(),
            values: vec![v; 1001],
            units,
            n_segments: 1,
        }
    }

    #[test]
    fn tesla_conversion() {
        let sd = flat(1.0, Units::VoltsPerRootHz);
        let t = volts_to_tesla(&sd, 1.0, 28.024e9).unwrap();
        assert!((t.values[3] - 3.568e-11).abs() < 1e-14);
        let t2 = volts_to_tesla(&sd, 2.0, 28.024e9).unwrap();
        assert_eq!(t2.values[3], t.values[3] / 2.0);
        assert!(matches!(volts_to_tesla(&sd, 0.0, 28.024e9), Err(Error::DivisionByZero(_))));
        let back = tesla_to_volts(&t, -1.0, 28.024e9).unwrap();
        assert!(back.values.iter().all(|v| (v - 1.0).abs() <= 1e-15));
    }

    #[test]
    fn band_means() {
        let sd = flat(2.5e-9, Units::TeslaPerRootHz);
        assert!((empirical_sensitivity(&sd, (0.0, 500.0)).unwrap() / 2.5e-9 - 1.0).abs() < 1e-14);
        assert!(matches!(empirical_sensitivity(&sd, (501.0, 509.0)), Err(Error::InvalidBand { .. })));
        assert!(empirical_sensitivity(&sd, (600.0, 500.0)).is_err());
        let mut v = flat(1e-6, Units::VoltsPerRootHz);
        v.values[5] = 1.0; // 50 Hz line
        assert!((laser_noise_metric(&v).unwrap() / 1e-6 - 1.0).abs() < 1e-14);
        let short = SpectralDensity {
            freqs: vec![0.0, 1000.0, 2000.0],
            values: vec![1.0; 3],
            ..v
        };
        assert!(laser_noise_metric(&short).is_err());
    }

    #[test]
    fn shot_noise_formula() {
        let g = crate::constants::GAMMA_E;
        let eta = shot_noise_sensitivity(6.6e6, 0.0054, 1e15, g).unwrap();
        assert!((eta / 1.0617e-9 - 1.0).abs() < 1e-4);
        let r2 = shot_noise_sensitivity(6.6e6, 0.0054, 2e15, g).unwrap();
        assert!((eta / r2 - 2f64.sqrt()).abs() < 1e-14);
        let c2 = shot_noise_sensitivity(6.6e6, 0.0108, 1e15, g).unwrap();
        assert!((eta / c2 - 2.0).abs() < 1e-14);
        assert!(matches!(shot_noise_sensitivity(6.6e6, 0.0, 1e15, g), Err(Error::DivisionByZero(_))));
        assert!(matches!(shot_noise_sensitivity(6.6e6, 0.01, 0.0, g), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn rate_ratio_round_trip() {
        let g = crate::constants::GAMMA_E;
        let a = shot_noise_sensitivity(6.6e6, 0.0256, 1.3e15, g).unwrap();
        let b = shot_noise_sensitivity(6.6e6, 0.0054, 1e15, g).unwrap();
        let r = implied_rate_ratio(a, b, 0.0256, 0.0054).unwrap();
        assert!((r - 1.3).abs() < 1e-12);
    }

    #[test]
    fn contrast_examples() {
        assert_eq!(odmr_contrast(1.0, 1.0).unwrap(), 0.0);
        assert!((odmr_contrast(0.9946, 1.0).unwrap() - 0.0054).abs() < 1e-15);
        assert_eq!(odmr_contrast(0.0, 0.3).unwrap(), 1.0);
        assert!(odmr_contrast(0.1, 0.0).is_err());
    }

    #[test]
    fn slope_of_a_line() {
        let f: Vec<f64> = (0..41).map(|k| 2.87e9 + (k as f64 - 20.0) * 5e4).collect();
        let v: Vec<f64> = f.iter().map(|x| 3e-9 * (x - 2.8700123e9)).collect();
        let s = lockin_slope(&f, &v).unwrap();
        assert!((s.slope / 3e-9 - 1.0).abs() < 1e-9);
        assert!((s.crossing - 2.8700123e9).abs() < 1e-2);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((lockin_slope(&f, &neg).unwrap().slope + s.slope).abs() < 1e-20);
        let pos: Vec<f64> = v.iter().map(|x| x.abs() + 1.0).collect();
        assert!(matches!(lockin_slope(&f, &pos), Err(Error::NoCrossing)));
    }
}
