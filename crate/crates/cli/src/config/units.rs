//! Physical dimensions and the unit suffixes accepted for each.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Current,
    Power,
    Frequency,
    Field,
    Time,
    Length,
    Area,
    Voltage,
    VoltDensity,
    RelDensity,
    Rate,
    Slope,
    Responsivity,
    Transimpedance,
    Gyromagnetic,
    Angle,
    /// Dimensionless; `%` and `ppm` accepted.
    Ratio,
}

const UNITS: &[(&str, Dim, f64)] = &[
    ("A", Dim::Current, 1.0),
    ("mA", Dim::Current, 1e-3),
    ("uA", Dim::Current, 1e-6),
    ("µA", Dim::Current, 1e-6),
    ("W", Dim::Power, 1.0),
    ("mW", Dim::Power, 1e-3),
    ("uW", Dim::Power, 1e-6),
    ("µW", Dim::Power, 1e-6),
    ("nW", Dim::Power, 1e-9),
    ("Hz", Dim::Frequency, 1.0),
    ("kHz", Dim::Frequency, 1e3),
    ("MHz", Dim::Frequency, 1e6),
    ("GHz", Dim::Frequency, 1e9),
    ("T", Dim::Field, 1.0),
    ("mT", Dim::Field, 1e-3),
    ("uT", Dim::Field, 1e-6),
    ("µT", Dim::Field, 1e-6),
    ("nT", Dim::Field, 1e-9),
    ("pT", Dim::Field, 1e-12),
    ("G", Dim::Field, 1e-4),
    ("s", Dim::Time, 1.0),
    ("ms", Dim::Time, 1e-3),
    ("us", Dim::Time, 1e-6),
    ("µs", Dim::Time, 1e-6),
    ("ns", Dim::Time, 1e-9),
    ("m", Dim::Length, 1.0),
    ("cm", Dim::Length, 1e-2),
    ("mm", Dim::Length, 1e-3),
    ("um", Dim::Length, 1e-6),
    ("µm", Dim::Length, 1e-6),
    ("m2", Dim::Area, 1.0),
    ("cm2", Dim::Area, 1e-4),
    ("V", Dim::Voltage, 1.0),
    ("mV", Dim::Voltage, 1e-3),
    ("uV", Dim::Voltage, 1e-6),
    ("µV", Dim::Voltage, 1e-6),
    ("nV", Dim::Voltage, 1e-9),
    ("V/rtHz", Dim::VoltDensity, 1.0),
    ("uV/rtHz", Dim::VoltDensity, 1e-6),
    ("nV/rtHz", Dim::VoltDensity, 1e-9),
    ("1/rtHz", Dim::RelDensity, 1.0),
    ("1/s", Dim::Rate, 1.0),
    ("W/A", Dim::Slope, 1.0),
    ("mW/mA", Dim::Slope, 1.0),
    ("A/W", Dim::Responsivity, 1.0),
    ("V/A", Dim::Transimpedance, 1.0),
    ("kV/A", Dim::Transimpedance, 1e3),
    ("Hz/T", Dim::Gyromagnetic, 1.0),
    ("MHz/mT", Dim::Gyromagnetic, 1e9),
    ("rad", Dim::Angle, 1.0),
    ("deg", Dim::Angle, std::f64::consts::PI / 180.0),
    ("%", Dim::Ratio, 1e-2),
    ("ppm", Dim::Ratio, 1e-6),
];

impl Dim {
    /// Suffix written by the canonical printer (values are SI).
    pub fn si_suffix(self) -> &'static str {
        match self {
            Dim::Current => "A",
            Dim::Power => "W",
            Dim::Frequency => "Hz",
            Dim::Field => "T",
            Dim::Time => "s",
            Dim::Length => "m",
            Dim::Area => "m2",
            Dim::Voltage => "V",
            Dim::VoltDensity => "V/rtHz",
            Dim::RelDensity => "1/rtHz",
            Dim::Rate => "1/s",
            Dim::Slope => "W/A",
            Dim::Responsivity => "A/W",
            Dim::Transimpedance => "V/A",
            Dim::Gyromagnetic => "Hz/T",
            Dim::Angle => "rad",
            Dim::Ratio => "",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dim::Current => "current",
            Dim::Power => "power",
            Dim::Frequency => "frequency",
            Dim::Field => "magnetic field",
            Dim::Time => "time",
            Dim::Length => "length",
            Dim::Area => "area",
            Dim::Voltage => "voltage",
            Dim::VoltDensity => "voltage density",
            Dim::RelDensity => "relative noise density",
            Dim::Rate => "rate",
            Dim::Slope => "slope efficiency",
            Dim::Responsivity => "responsivity",
            Dim::Transimpedance => "transimpedance",
            Dim::Gyromagnetic => "gyromagnetic ratio",
            Dim::Angle => "angle",
            Dim::Ratio => "dimensionless",
        }
    }
}

/// Scale to SI of `suffix` for dimension `dim`. `Err(Some(other))` when the
/// suffix belongs to another dimension, `Err(None)` when it is unknown.
pub fn scale(suffix: &str, dim: Dim) -> Result<f64, Option<Dim>> {
    let mut other = None;
    for &(s, d, k) in UNITS {
        if s == suffix {
            if d == dim {
                return Ok(k);
            }
            other = Some(d);
        }
    }
    Err(other)
}

pub fn is_unit(suffix: &str) -> bool {
    UNITS.iter().any(|(s, ..)| *s == suffix)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes_are_unique_per_dimension() {
        for (i, a) in UNITS.iter().enumerate() {
            for b in &UNITS[i + 1..] {
                assert!(a.0 != b.0, "suffix {} listed twice", a.0);
            }
        }
    }

    #[test]
    fn canonical_suffix_scales_by_one() {
        for &(_, d, _) in UNITS {
            if d != Dim::Ratio {
                assert_eq!(scale(d.si_suffix(), d), Ok(1.0));
            }
        }
    }

    #[test]
    fn mismatch_names_the_other_dimension() {
        assert_eq!(scale("mT", Dim::Current), Err(Some(Dim::Field)));
        assert_eq!(scale("furlong", Dim::Length), Err(None));
        assert_eq!(scale("mA", Dim::Current), Ok(1e-3));
    }
}
