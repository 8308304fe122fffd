//! Three-mirror compound cavity reduced to a two-mirror equivalent.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityConfig {
    /// Rear-facet power reflectivity of the gain chip.
    pub r1: f64,
    /// Front-facet (AR side) power reflectivity.
    pub r_ff: f64,
    /// Output coupler reflectivity (HR-coated diamond).
    pub r2: f64,
    /// Spatial mode overlap between internal and external fields.
    pub eta_overlap: f64,
    /// Internal cavity length, m.
    pub l_int: f64,
    /// External cavity length, m.
    pub l_ext: f64,
}

impl Default for CavityConfig {
    fn default() -> Self {
        Self {
            r1: 0.90,
            r_ff: 0.001,
            r2: 0.90,
            eta_overlap: 0.8,
            l_int: 1.5e-3,
            l_ext: 30e-3,
        }
    }
}

impl CavityConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("R1", self.r1),
            ("R_ff", self.r_ff),
            ("R2", self.r2),
            ("eta_overlap", self.eta_overlap),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.l_int > 0.0 && self.l_ext > 0.0) {
            return invalid("cavity lengths must be positive");
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        self.l_int + self.l_ext
    }
}

/// Effective reflectivity of the front facet plus external mirror.
pub fn effective_reflectivity(c: &CavityConfig) -> Result<f64> {
    c.validate()?;
    let rff = c.r_ff.sqrt();
    let r2 = c.r2.sqrt();
    let amp = (rff + c.eta_overlap * r2) / (1.0 + c.eta_overlap * rff * r2);
    Ok(amp * amp)
}

/// Passive finesse of the two-mirror equivalent cavity.
pub fn finesse(r1: f64, r_e: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r1) || !(0.0..=1.0).contains(&r_e) {
        return invalid(format!("reflectivities must lie in [0, 1] (R1 = {r1}, Re = {r_e})"));
    }
    let product = r1 * r_e;
    if product >= 1.0 {
        return Err(Error::DivergentFinesse(product));
    }
    Ok(PI * product.powf(0.25) / (1.0 - product.sqrt()))
}

/// Mean number of round trips, `F/π`.
pub fn round_trips(finesse: f64) -> Result<f64> {
    if !(finesse >= 0.0) {
        return invalid(format!("finesse must be non-negative, got {finesse}"));
    }
    Ok(finesse / PI)
}

/// Cavity-enhanced absorption contrast `2 N C_single` (each round trip
/// crosses the diamond twice).
pub fn geometric_contrast(c_single: f64, round_trips: f64) -> Result<f64> {
    if c_single < 0.0 || round_trips < 0.0 {
        return invalid("contrast and round-trip count must be non-negative");
    }
    Ok(2.0 * round_trips * c_single)
}

/// Inverse of [`geometric_contrast`]: single-pass contrast from the cavity value.
pub fn single_pass_contrast(c_cavity: f64, round_trips: f64) -> Result<f64> {
    if c_cavity < 0.0 || !(round_trips > 0.0) {
        return invalid("cavity contrast must be non-negative and round trips positive");
    }
    Ok(c_cavity / (2.0 * round_trips))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reported_reflectivity() {
        let re = effective_reflectivity(&CavityConfig::default()).unwrap();
        assert!((re - 0.60).abs() <= 0.01, "{re}");
    }

    #[test]
    fn reflectivity_limits() {
        let c = CavityConfig {
            eta_overlap: 0.0,
            r_ff: 0.037,
            ..Default::default()
        };
        assert_relative_eq!(effective_reflectivity(&c).unwrap(), c.r_ff, max_relative = 1e-15);
        let c = CavityConfig {
            eta_overlap: 1.0,
            r_ff: 0.0,
            r2: 0.81,
            ..Default::default()
        };
        assert_relative_eq!(effective_reflectivity(&c).unwrap(), 0.81, max_relative = 1e-15);
    }

    #[test]
    fn reflectivity_monotone_in_r2() {
        for eta in [0.2, 0.5, 0.8, 1.0] {
            for rff in [0.0, 0.001, 0.01, 0.1] {
                let mut last = -1.0;
                for k in 0..=50 {
                    let c = CavityConfig {
                        r2: k as f64 / 50.0,
                        r_ff: rff,
                        eta_overlap: eta,
                        ..Default::default()
                    };
                    let re = effective_reflectivity(&c).unwrap();
                    assert!(re > last);
                    last = re;
                }
            }
        }
    }

    #[test]
    fn finesse_examples() {
        assert!((finesse(0.90, 0.60).unwrap() - 10.15).abs() < 0.05);
        assert!(finesse(1e-12, 1e-12).unwrap() < 1e-5);
        assert!((finesse(0.99, 0.99).unwrap() - 312.58).abs() < 0.01);
        assert!(matches!(finesse(1.0, 1.0), Err(Error::DivergentFinesse(_))));
    }

    #[test]
    fn finesse_increasing() {
        let mut last = -1.0;
        for k in 0..1000 {
            let f = finesse(k as f64 / 1000.0, 1.0).unwrap();
            assert!(f > last);
            last = f;
        }
    }

    #[test]
    fn round_trip_examples() {
        assert!((round_trips(10.0).unwrap() - 3.18).abs() < 0.005);
        assert_relative_eq!(round_trips(PI).unwrap(), 1.0);
        assert!((round_trips(312.6).unwrap() - 99.5).abs() < 0.01);
    }

    #[test]
    fn contrast_examples() {
        assert_relative_eq!(single_pass_contrast(0.0054, 3.0).unwrap(), 0.0009, max_relative = 1e-12);
        assert_eq!(geometric_contrast(0.0, 3.0).unwrap(), 0.0);
        assert_relative_eq!(geometric_contrast(1e-6, 99.5).unwrap(), 1.99e-4, max_relative = 1e-12);
        for c in [0.0, 1e-7, 3e-4, 0.02] {
            for n in [0.5, 3.0, 99.5] {
                let back = single_pass_contrast(geometric_contrast(c, n).unwrap(), n).unwrap();
                assert!((back - c).abs() <= 1e-15);
            }
        }
    }
}
