//! Physical constants and default material parameters (SI units).

/// Ground-state zero-field splitting, Hz.
pub const ZERO_FIELD_SPLITTING: f64 = 2.87e9;

/// NV electron gyromagnetic ratio, Hz/T (28.024 MHz/mT).
pub const GAMMA_E: f64 = 28.024e9;

/// Carbon atom number density of diamond, cm^-3.
pub const CARBON_DENSITY_CM3: f64 = 1.76e23;

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Probe (singlet) wavelength, m.
pub const PROBE_WAVELENGTH: f64 = 1042e-9;

/// Photon energy at the probe wavelength, J.
pub fn probe_photon_energy() -> f64 {
    PLANCK * SPEED_OF_LIGHT / PROBE_WAVELENGTH
}

/// Converts an NV concentration in ppm (relative to carbon) to cm^-3.
pub fn ppm_to_cm3(ppm: f64) -> f64 {
    ppm * 1e-6 * CARBON_DENSITY_CM3
}
