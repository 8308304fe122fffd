//! Experiment configuration files.
//!
//! The format is a list of `[section]` blocks holding `key = value` lines.
//! `#` and `;` start comments. Quantities accept a unit suffix (`26.75 mA`,
//! `416 uW`, `2.87 GHz`, `6 mT`, ...) and are stored in SI; a bare number
//! is already SI. Lists are comma separated with at most one trailing unit.
//!
//! ```text
//! [run]
//! scenario = pi_sweep
//! seed = 7
//!
//! [laser]
//! I_th_base = 26.75 mA
//!
//! [modulation]
//! kind = current_sawtooth
//!
//! [noise]
//! ```
//!
//! Keys left out take their documented defaults. [`ExperimentConfig`]'s
//! `Display` prints every field in SI in a fixed order; parsing that text
//! gives back an equal config, and its hash is the config hash.

mod text;
pub mod units;

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use nalgebra::Vector3;
use nvltm_core::cavity::CavityConfig;
use nvltm_core::constants::{ppm_to_cm3, GAMMA_E, ZERO_FIELD_SPLITTING};
use nvltm_core::laser::{
    calibrate_contrast, AbsorptionShift, DEFAULT_LINEWIDTH, DEFAULT_STRAIN_E,
};
use nvltm_core::magnetometry::BIASED_LINE_SHIFT;
use nvltm_core::nv_spin::sorted_transitions;
use nvltm_core::synth::{Acquisition, RinTable};
use nvltm_core::{Detector, ModulationSpec, NoiseSpec, PiCurveModel, RateModel, ShiftProfile, SpinSystem};
use sha2::{Digest, Sha256};
use thiserror::Error;

use text::{Fields, RawSection};
use units::Dim;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("duplicate section [{section}] (first defined on line {first})")]
    DuplicateSection { section: String, first: usize },
    #[error("missing section [{section}] required by scenario {scenario}")]
    MissingSection { section: String, scenario: String },
    #[error("section [{section}] is not used by scenario {scenario}")]
    UnusedSection { section: String, scenario: String },
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("duplicate key `{key}` in [{section}] (first defined on line {first})")]
    DuplicateKey {
        section: String,
        key: String,
        first: usize,
    },
    #[error("missing key `{key}` in [{section}]")]
    MissingKey { section: String, key: String },
    #[error("unit mismatch for `{key}`: `{unit}` is not a {expected} unit")]
    UnitMismatch {
        key: String,
        unit: String,
        expected: &'static str,
    },
    #[error("invalid value for `{key}`: {msg}")]
    InvalidValue { key: String, msg: String },
    #[error("invalid [{section}] settings: {msg}")]
    Invalid { section: String, msg: String },
}

/// One problem, located by 1-based line (0 when it concerns the whole file).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub kind: ConfigErrorKind,
}

impl ConfigError {
    fn syntax(line: usize, msg: impl Into<String>) -> Self {
        Self {
            line,
            kind: ConfigErrorKind::Syntax(msg.into()),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.kind)
        } else {
            write!(f, "line {}: {}", self.line, self.kind)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    PiSweep,
    AmOdmr,
    ThresholdOdmr,
    FmLockinMagnetometry,
    NoiseSurvey,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        Self::PiSweep,
        Self::AmOdmr,
        Self::ThresholdOdmr,
        Self::FmLockinMagnetometry,
        Self::NoiseSurvey,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::PiSweep => "pi_sweep",
            Self::AmOdmr => "am_odmr",
            Self::ThresholdOdmr => "threshold_odmr",
            Self::FmLockinMagnetometry => "fm_lockin_magnetometry",
            Self::NoiseSurvey => "noise_survey",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id)
    }

    /// Section holding the scenario parameters.
    fn params_section(self) -> &'static str {
        match self {
            Self::FmLockinMagnetometry => "fm_lockin",
            other => other.id(),
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            Self::PiSweep => &["laser", "modulation", "noise"],
            Self::AmOdmr => &["laser", "modulation", "noise", "am_odmr"],
            Self::ThresholdOdmr => &["spin", "laser", "modulation", "noise", "threshold_odmr"],
            Self::FmLockinMagnetometry => &["spin", "laser", "modulation", "noise", "fm_lockin"],
            Self::NoiseSurvey => &["laser", "noise", "noise_survey"],
        }
    }

    fn modulation_kind(self) -> Option<&'static str> {
        match self {
            Self::PiSweep | Self::ThresholdOdmr => Some("current_sawtooth"),
            Self::AmOdmr => Some("am_square"),
            Self::FmLockinMagnetometry => Some("fm_sine"),
            Self::NoiseSurvey => None,
        }
    }
}

const SECTIONS: [&str; 13] = [
    "run",
    "spin",
    "rates",
    "cavity",
    "laser",
    "modulation",
    "noise",
    "acquisition",
    "pi_sweep",
    "am_odmr",
    "threshold_odmr",
    "fm_lockin",
    "noise_survey",
];

const SCENARIO_SECTIONS: [&str; 5] = ["pi_sweep", "am_odmr", "threshold_odmr", "fm_lockin", "noise_survey"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    /// Output sub-directory name; defaults to the scenario id.
    pub name: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinSection {
    pub d: f64,
    pub e: f64,
    pub gamma_e: f64,
    /// Bias field magnitude, T.
    pub field: f64,
    /// Bias direction, normalized when the spin system is built.
    pub direction: [f64; 3],
}

impl Default for SpinSection {
    fn default() -> Self {
        Self {
            d: ZERO_FIELD_SPLITTING,
            e: DEFAULT_STRAIN_E,
            gamma_e: GAMMA_E,
            field: 0.0,
            direction: [0.0, 0.0, 1.0],
        }
    }
}

impl SpinSection {
    pub fn system(&self) -> SpinSystem {
        let dir = Vector3::from(self.direction);
        let norm = dir.norm();
        SpinSystem {
            d: self.d,
            e: self.e,
            gamma_e: self.gamma_e,
            field: if norm > 0.0 { dir * (self.field / norm) } else { Vector3::zeros() },
            ..SpinSystem::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slopes {
    Explicit { off: f64, on: f64 },
    /// Solved from the far-above-threshold contrast and the contrast at the
    /// reference reverse threshold.
    Calibrated { far: f64, threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MwProfile {
    /// Strain doublet at `D ± E`.
    ZeroField,
    /// One line per transition of the biased spin system.
    Biased { line_shift: f64 },
    /// Singlet absorption from the rate model (needs `[rates]`).
    Absorption {
        peak_mw_rate: f64,
        /// Cross-section, m².
        sigma: f64,
        /// NV concentration as a fraction of carbon sites.
        nv_fraction: f64,
        /// m.
        path_length: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaserSection {
    pub threshold_base: f64,
    pub slopes: Slopes,
    pub step_power: f64,
    pub floor_power: f64,
    pub hysteresis: f64,
    pub pump_shift: f64,
    pub mw_shift: f64,
    pub linewidth: f64,
    pub profile: MwProfile,
}

impl Default for LaserSection {
    fn default() -> Self {
        let m = PiCurveModel::default();
        Self {
            threshold_base: m.threshold_base,
            slopes: Slopes::Explicit {
                off: m.slope_off,
                on: m.slope_on,
            },
            step_power: m.step_power,
            floor_power: m.floor_power,
            hysteresis: m.hysteresis,
            pump_shift: m.pump_shift,
            mw_shift: m.reference_shift,
            linewidth: DEFAULT_LINEWIDTH,
            profile: MwProfile::ZeroField,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionSection {
    pub fs: f64,
    /// Trace length for the continuous scenarios, s.
    pub duration: f64,
    pub responsivity: f64,
    pub gain: f64,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        let d = Detector::default();
        Self {
            fs: 400e3,
            duration: 1.0,
            responsivity: d.responsivity,
            gain: d.gain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Bare,
    Pump,
    PumpMw,
}

impl Condition {
    const IDS: [&'static str; 3] = ["bare", "pump", "pump_mw"];

    pub fn id(self) -> &'static str {
        Self::IDS[self as usize]
    }

    fn from_id(s: &str) -> Self {
        match s {
            "bare" => Self::Bare,
            "pump" => Self::Pump,
            _ => Self::PumpMw,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiSweepParams {
    pub conditions: Vec<Condition>,
    pub periods: u64,
}

/// Frequency grid shared by the ODMR scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub start: f64,
    pub stop: f64,
    pub points: u64,
}

impl FrequencyGrid {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points as usize;
        (0..n)
            .map(|k| self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmOdmrParams {
    pub current: f64,
    pub grid: FrequencyGrid,
    pub periods: u64,
    /// Lorentzians fitted to the contrast spectrum; 0 disables the fit.
    pub peaks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdOdmrParams {
    pub grid: FrequencyGrid,
    pub periods: u64,
    pub peaks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmLockinParams {
    pub current: f64,
    /// Operating resonance; the lowest transition when unset.
    pub f_line: Option<f64>,
    pub f_insensitive: f64,
    pub enbw: f64,
    pub phase: f64,
    pub segment: f64,
    pub band: (f64, f64),
    pub scan_half_span: f64,
    pub scan_points: u64,
    /// Injected field amplitude, T; 0 disables injection.
    pub inject_amplitude: f64,
    pub inject_frequency: f64,
    /// Spectra are exported up to this frequency.
    pub export_f_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSurveyParams {
    pub currents: Vec<f64>,
    pub f_mw: f64,
    pub segment: f64,
    pub export_f_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    PiSweep(PiSweepParams),
    AmOdmr(AmOdmrParams),
    ThresholdOdmr(ThresholdOdmrParams),
    FmLockin(FmLockinParams),
    NoiseSurvey(NoiseSurveyParams),
}

impl Scenario {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            Self::PiSweep(_) => ScenarioKind::PiSweep,
            Self::AmOdmr(_) => ScenarioKind::AmOdmr,
            Self::ThresholdOdmr(_) => ScenarioKind::ThresholdOdmr,
            Self::FmLockin(_) => ScenarioKind::FmLockinMagnetometry,
            Self::NoiseSurvey(_) => ScenarioKind::NoiseSurvey,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub scenario: Scenario,
    pub spin: Option<SpinSection>,
    pub rates: Option<RateModel>,
    pub cavity: Option<CavityConfig>,
    pub laser: LaserSection,
    pub modulation: Option<ModulationSpec>,
    pub noise: NoiseSpec,
    pub acquisition: AcquisitionSection,
}

/// Reference reverse threshold of the default model (pump and microwave
/// on), the unit in which default drive currents are chosen.
fn default_reference_current() -> f64 {
    PiCurveModel::default().reference_reverse_on()
}

fn is_safe_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let sections = text::lex(text, &mut errors);
    for s in &sections {
        if !SECTIONS.contains(&s.name.as_str()) {
            errors.push(ConfigError {
                line: s.line,
                kind: ConfigErrorKind::UnknownSection(s.name.clone()),
            });
        }
    }
    let find = |name: &str| sections.iter().find(|s| s.name == name);

    let Some(run_raw) = find("run") else {
        errors.push(ConfigError {
            line: 0,
            kind: ConfigErrorKind::MissingSection {
                section: "run".into(),
                scenario: "(any)".into(),
            },
        });
        return Err(ConfigErrors(errors));
    };
    let mut run = Fields::new(run_raw, &mut errors);
    let kind = run
        .required_word("scenario", &ScenarioKind::ALL.map(|k| k.id()))
        .and_then(|id| ScenarioKind::from_id(&id));
    let seed = run.opt_int("seed");
    let name = run.opt_word("name", &[]);
    let run_line = run.line;
    run.finish();
    let Some(kind) = kind else {
        return Err(ConfigErrors(errors));
    };
    let name = match name {
        Some(n) if !is_safe_name(&n) => {
            errors.push(ConfigError {
                line: run_line,
                kind: ConfigErrorKind::InvalidValue {
                    key: "name".into(),
                    msg: format!("`{n}` must be a single path component of [A-Za-z0-9_.-]"),
                },
            });
            kind.id().to_string()
        }
        Some(n) => n,
        None => kind.id().to_string(),
    };

    for req in kind.required() {
        if find(req).is_none() {
            errors.push(ConfigError {
                line: 0,
                kind: ConfigErrorKind::MissingSection {
                    section: (*req).into(),
                    scenario: kind.id().into(),
                },
            });
        }
    }
    let own = kind.params_section();
    for s in &sections {
        let foreign_params = SCENARIO_SECTIONS.contains(&s.name.as_str()) && s.name != own;
        let unused_modulation = s.name == "modulation" && kind.modulation_kind().is_none();
        if foreign_params || unused_modulation {
            errors.push(ConfigError {
                line: s.line,
                kind: ConfigErrorKind::UnusedSection {
                    section: s.name.clone(),
                    scenario: kind.id().into(),
                },
            });
        }
    }

    let spin = find("spin").map(|s| parse_spin(s, &mut errors));
    let rates = find("rates").map(|s| parse_rates(s, &mut errors));
    let cavity = find("cavity").map(|s| parse_cavity(s, &mut errors));
    let laser = find("laser").map(|s| parse_laser(s, &mut errors)).unwrap_or_default();
    let modulation = match (find("modulation"), kind.modulation_kind()) {
        (Some(s), Some(expected)) => parse_modulation(s, expected, &mut errors),
        _ => None,
    };
    let noise = find("noise").map(|s| parse_noise(s, &mut errors)).unwrap_or_else(NoiseSpec::none);
    let acquisition = find("acquisition")
        .map(|s| parse_acquisition(s, &mut errors))
        .unwrap_or_default();
    let params_raw = find(own);
    let scenario = match kind {
        ScenarioKind::PiSweep => Scenario::PiSweep(parse_pi_sweep(params_raw, &mut errors)),
        ScenarioKind::AmOdmr => Scenario::AmOdmr(parse_am_odmr(params_raw, &mut errors)),
        ScenarioKind::ThresholdOdmr => Scenario::ThresholdOdmr(parse_threshold_odmr(params_raw, &mut errors)),
        ScenarioKind::FmLockinMagnetometry => Scenario::FmLockin(parse_fm_lockin(params_raw, &mut errors)),
        ScenarioKind::NoiseSurvey => Scenario::NoiseSurvey(parse_noise_survey(params_raw, &mut errors)),
    };

    if seed.is_none() && noise.is_random() {
        errors.push(ConfigError {
            line: run_line,
            kind: ConfigErrorKind::MissingKey {
                section: "run".into(),
                key: "seed".into(),
            },
        });
    }
    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }

    let cfg = ExperimentConfig {
        run: RunSection { name, seed },
        scenario,
        spin,
        rates,
        cavity,
        laser,
        modulation,
        noise,
        acquisition,
    };
    cfg.check_models(&sections)?;
    Ok(cfg)
}

fn parse_spin(raw: &RawSection, errors: &mut Vec<ConfigError>) -> SpinSection {
    let mut f = Fields::new(raw, errors);
    let d = SpinSection::default();
    let direction = f.list("B_direction", Dim::Ratio, &d.direction);
    let out = SpinSection {
        d: f.quantity("D", Dim::Frequency, d.d),
        e: f.quantity("E", Dim::Frequency, d.e),
        gamma_e: f.quantity("gamma_e", Dim::Gyromagnetic, d.gamma_e),
        field: f.quantity("B", Dim::Field, d.field),
        direction: match direction.as_slice() {
            [x, y, z] => [*x, *y, *z],
            _ => {
                f.error("B_direction needs three components");
                d.direction
            }
        },
    };
    f.finish();
    out
}

fn parse_rates(raw: &RawSection, errors: &mut Vec<ConfigError>) -> RateModel {
    let mut f = Fields::new(raw, errors);
    let w_pump = f.quantity("w_pump", Dim::Rate, 1e6);
    let d = RateModel::literature(w_pump);
    let out = RateModel {
        k_rad: f.quantity("k_rad", Dim::Rate, d.k_rad),
        k35: f.quantity("k35", Dim::Rate, d.k35),
        k45: f.quantity("k45", Dim::Rate, d.k45),
        k56: f.quantity("k56", Dim::Rate, d.k56),
        k61: f.quantity("k61", Dim::Rate, d.k61),
        k62: f.quantity("k62", Dim::Rate, d.k62),
        w_pump,
        w_mw: f.quantity("w_mw", Dim::Rate, d.w_mw),
    };
    if let Err(e) = out.validate() {
        f.error(e.to_string());
    }
    f.finish();
    out
}

fn parse_cavity(raw: &RawSection, errors: &mut Vec<ConfigError>) -> CavityConfig {
    let mut f = Fields::new(raw, errors);
    let d = CavityConfig::default();
    let out = CavityConfig {
        r1: f.quantity("R1", Dim::Ratio, d.r1),
        r_ff: f.quantity("R_ff", Dim::Ratio, d.r_ff),
        r2: f.quantity("R2", Dim::Ratio, d.r2),
        eta_overlap: f.quantity("eta_overlap", Dim::Ratio, d.eta_overlap),
        l_int: f.quantity("L_int", Dim::Length, d.l_int),
        l_ext: f.quantity("L_ext", Dim::Length, d.l_ext),
    };
    if let Err(e) = out.validate() {
        f.error(e.to_string());
    }
    f.finish();
    out
}

fn parse_laser(raw: &RawSection, errors: &mut Vec<ConfigError>) -> LaserSection {
    let mut f = Fields::new(raw, errors);
    let d = LaserSection::default();
    let explicit = f.has("slope_off") || f.has("slope_on");
    let calibrated = f.has("contrast_far") || f.has("contrast_threshold");
    let slopes = if calibrated {
        if explicit {
            f.error("give either slope_off/slope_on or contrast_far/contrast_threshold, not both");
        }
        if !(f.has("contrast_far") && f.has("contrast_threshold")) {
            f.error("contrast calibration needs both contrast_far and contrast_threshold");
        }
        Slopes::Calibrated {
            far: f.quantity("contrast_far", Dim::Ratio, 0.0),
            threshold: f.quantity("contrast_threshold", Dim::Ratio, 0.0),
        }
    } else {
        let Slopes::Explicit { off, on } = d.slopes else {
            unreachable!()
        };
        Slopes::Explicit {
            off: f.quantity("slope_off", Dim::Slope, off),
            on: f.quantity("slope_on", Dim::Slope, on),
        }
    };
    let profile = match f.opt_word("mw_profile", &["zero_field", "biased", "absorption"]).as_deref() {
        Some("biased") => MwProfile::Biased {
            line_shift: f.quantity("line_shift", Dim::Current, BIASED_LINE_SHIFT),
        },
        Some("absorption") => MwProfile::Absorption {
            peak_mw_rate: f.quantity("peak_mw_rate", Dim::Rate, 2e5),
            sigma: f.quantity("sigma", Dim::Area, 2e-26),
            nv_fraction: f.quantity("nv_density", Dim::Ratio, 1.2e-6),
            path_length: f.quantity("path_length", Dim::Length, 250e-6),
        },
        _ => MwProfile::ZeroField,
    };
    let out = LaserSection {
        threshold_base: f.quantity("I_th_base", Dim::Current, d.threshold_base),
        slopes,
        step_power: f.quantity("P_step", Dim::Power, d.step_power),
        floor_power: f.quantity("P_floor", Dim::Power, d.floor_power),
        hysteresis: f.quantity("dI_hyst", Dim::Current, d.hysteresis),
        pump_shift: f.quantity("dI_pump", Dim::Current, d.pump_shift),
        mw_shift: f.quantity("dI_mw", Dim::Current, d.mw_shift),
        linewidth: f.quantity("linewidth", Dim::Frequency, d.linewidth),
        profile,
    };
    f.finish();
    out
}

fn parse_modulation(raw: &RawSection, expected: &str, errors: &mut Vec<ConfigError>) -> Option<ModulationSpec> {
    let mut f = Fields::new(raw, errors);
    let kind = f.required_word("kind", &["current_sawtooth", "am_square", "fm_sine"]);
    let spec = match kind.as_deref() {
        Some(k) if k != expected => {
            f.error(format!("kind {k} does not match the scenario, which needs {expected}"));
            None
        }
        Some("current_sawtooth") => {
            let ModulationSpec::CurrentSawtooth {
                f_mod,
                start,
                range,
                rise_fraction,
            } = ModulationSpec::default_sawtooth()
            else {
                unreachable!()
            };
            Some(ModulationSpec::CurrentSawtooth {
                f_mod: f.quantity("f_mod", Dim::Frequency, f_mod),
                start: f.quantity("start", Dim::Current, start),
                range: f.quantity("range", Dim::Current, range),
                rise_fraction: f.quantity("rise_fraction", Dim::Ratio, rise_fraction),
            })
        }
        Some("am_square") => Some(ModulationSpec::AmSquare {
            f_mod: f.quantity("f_mod", Dim::Frequency, 131.0),
            duty: f.quantity("duty", Dim::Ratio, 0.3),
        }),
        Some(_) => Some(ModulationSpec::FmSine {
            f_mod: f.quantity("f_mod", Dim::Frequency, 1371.0),
            deviation: f.quantity("deviation", Dim::Frequency, 4e6),
        }),
        None => None,
    };
    if let Some(Err(e)) = spec.map(|s| s.validate()) {
        f.error(e.to_string());
    }
    // keys of other kinds are unknown here; skip the noise when kind failed
    if spec.is_some() {
        f.finish();
    }
    spec
}

fn parse_noise(raw: &RawSection, errors: &mut Vec<ConfigError>) -> NoiseSpec {
    let mut f = Fields::new(raw, errors);
    let d = NoiseSpec::default();
    let table = f.pairs("rin_table", d.rin_vs_current.knots());
    let rin_vs_current = match RinTable::new(table) {
        Ok(t) => t,
        Err(e) => {
            f.error(e.to_string());
            d.rin_vs_current.clone()
        }
    };
    let out = NoiseSpec {
        shot: f.flag("shot", d.shot),
        electronic_floor: f.quantity("electronic_floor", Dim::VoltDensity, d.electronic_floor),
        rin: f.quantity("rin", Dim::RelDensity, d.rin),
        rin_vs_current,
        line_50hz: f.quantity("line_50hz", Dim::Voltage, d.line_50hz),
        line_frequency: f.quantity("line_frequency", Dim::Frequency, d.line_frequency),
        drift_lowfreq: f.quantity("drift_lowfreq", Dim::Voltage, d.drift_lowfreq),
    };
    if let Err(e) = out.validate() {
        f.error(e.to_string());
    }
    f.finish();
    out
}

fn parse_acquisition(raw: &RawSection, errors: &mut Vec<ConfigError>) -> AcquisitionSection {
    let mut f = Fields::new(raw, errors);
    let d = AcquisitionSection::default();
    let out = AcquisitionSection {
        fs: f.quantity("fs", Dim::Frequency, d.fs),
        duration: f.quantity("duration", Dim::Time, d.duration),
        responsivity: f.quantity("responsivity", Dim::Responsivity, d.responsivity),
        gain: f.quantity("gain", Dim::Transimpedance, d.gain),
    };
    if !(out.fs > 0.0 && out.duration > 0.0) {
        f.error("fs and duration must be positive");
    }
    f.finish();
    out
}

/// Runs `body` on the scenario section, or on an empty one when absent.
fn with_section<T>(
    raw: Option<&RawSection>,
    name: &str,
    errors: &mut Vec<ConfigError>,
    body: impl FnOnce(&mut Fields) -> T,
) -> T {
    let empty = RawSection {
        name: name.into(),
        line: 0,
        entries: Vec::new(),
    };
    let mut f = Fields::new(raw.unwrap_or(&empty), errors);
    let out = body(&mut f);
    f.finish();
    out
}

fn grid(f: &mut Fields, start: f64, stop: f64, points: u64) -> FrequencyGrid {
    let g = FrequencyGrid {
        start: f.quantity("f_start", Dim::Frequency, start),
        stop: f.quantity("f_stop", Dim::Frequency, stop),
        points: f.int("points", points),
    };
    if !(g.stop > g.start && g.points >= 2) {
        f.error("need f_stop > f_start and at least two points");
    }
    g
}

fn periods(f: &mut Fields) -> u64 {
    let p = f.int("periods", 1);
    if p == 0 {
        f.error("periods must be at least 1");
    }
    p
}

fn peaks(f: &mut Fields, allow_zero: bool) -> u64 {
    let p = f.int("peaks", 2);
    if p > 2 || (p == 0 && !allow_zero) {
        f.error("peaks must be 1 or 2");
    }
    p
}

fn parse_pi_sweep(raw: Option<&RawSection>, errors: &mut Vec<ConfigError>) -> PiSweepParams {
    with_section(raw, "pi_sweep", errors, |f| {
        let conditions: Vec<Condition> = f
            .words("conditions", &Condition::IDS, &Condition::IDS)
            .iter()
            .map(|w| Condition::from_id(w))
            .collect();
        PiSweepParams {
            conditions,
            periods: periods(f),
        }
    })
}

fn parse_am_odmr(raw: Option<&RawSection>, errors: &mut Vec<ConfigError>) -> AmOdmrParams {
    with_section(raw, "am_odmr", errors, |f| AmOdmrParams {
        current: f.quantity("current", Dim::Current, 2.0 * default_reference_current()),
        grid: grid(f, 2.85e9, 2.89e9, 81),
        periods: periods(f),
        peaks: peaks(f, true),
    })
}

fn parse_threshold_odmr(raw: Option<&RawSection>, errors: &mut Vec<ConfigError>) -> ThresholdOdmrParams {
    with_section(raw, "threshold_odmr", errors, |f| ThresholdOdmrParams {
        grid: grid(f, 2.85e9, 2.89e9, 81),
        periods: periods(f),
        peaks: peaks(f, false),
    })
}

fn parse_fm_lockin(raw: Option<&RawSection>, errors: &mut Vec<ConfigError>) -> FmLockinParams {
    with_section(raw, "fm_lockin", errors, |f| {
        let p = FmLockinParams {
            current: f.quantity("current", Dim::Current, 2.0 * default_reference_current()),
            f_line: f.opt_quantity("f_line", Dim::Frequency),
            f_insensitive: f.quantity("f_insensitive", Dim::Frequency, 1.31e9),
            enbw: f.quantity("enbw", Dim::Frequency, 2.6e3),
            phase: f.quantity("phase", Dim::Angle, -PI / 2.0),
            segment: f.quantity("segment", Dim::Time, 1.0),
            band: (
                f.quantity("band_lo", Dim::Frequency, 0.0),
                f.quantity("band_hi", Dim::Frequency, 500.0),
            ),
            scan_half_span: f.quantity("scan_half_span", Dim::Frequency, 1e6),
            scan_points: f.int("scan_points", 41),
            inject_amplitude: f.quantity("inject_amplitude", Dim::Field, 0.0),
            inject_frequency: f.quantity("inject_frequency", Dim::Frequency, 50.0),
            export_f_max: f.quantity("export_f_max", Dim::Frequency, 20e3),
        };
        if !(p.band.1 > p.band.0 && p.segment > 0.0 && p.inject_amplitude >= 0.0) {
            f.error("need band_hi > band_lo, a positive segment and a non-negative injection");
        }
        p
    })
}

fn parse_noise_survey(raw: Option<&RawSection>, errors: &mut Vec<ConfigError>) -> NoiseSurveyParams {
    let r = default_reference_current();
    let defaults = [1.0, 1.05, 1.2, 1.5, 2.0].map(|k| k * r);
    with_section(raw, "noise_survey", errors, |f| {
        let p = NoiseSurveyParams {
            currents: f.list("currents", Dim::Current, &defaults),
            f_mw: f.quantity("f_mw", Dim::Frequency, 1.31e9),
            segment: f.quantity("segment", Dim::Time, 1.0),
            export_f_max: f.quantity("export_f_max", Dim::Frequency, 20e3),
        };
        if p.currents.is_empty() || p.currents.iter().any(|c| !(*c > 0.0)) || !(p.segment > 0.0) {
            f.error("currents must be positive and the segment length positive");
        }
        p
    })
}

impl ExperimentConfig {
    pub fn kind(&self) -> ScenarioKind {
        self.scenario.kind()
    }

    /// The `[spin]` section, or its defaults (zero field, default strain).
    pub fn spin_system(&self) -> SpinSystem {
        self.spin.clone().unwrap_or_default().system()
    }

    pub fn detector(&self) -> Detector {
        Detector {
            responsivity: self.acquisition.responsivity,
            gain: self.acquisition.gain,
        }
    }

    pub fn acquisition(&self) -> Acquisition {
        Acquisition {
            fs: self.acquisition.fs,
            duration: self.acquisition.duration,
            detector: self.detector(),
            noise: self.noise.clone(),
            seed: self.run.seed.unwrap_or(0),
        }
    }

    pub fn model(&self) -> nvltm_core::Result<PiCurveModel> {
        let l = &self.laser;
        let sys = self.spin_system();
        let mw_shift = match l.profile {
            MwProfile::ZeroField => ShiftProfile::zero_field(sys.d, sys.e, l.linewidth, l.mw_shift)?,
            MwProfile::Biased { line_shift } => ShiftProfile::biased(&sys, l.linewidth, line_shift)?,
            MwProfile::Absorption {
                peak_mw_rate,
                sigma,
                nv_fraction,
                path_length,
            } => {
                let mut centers: Vec<f64> = sorted_transitions(&sys)?.into_iter().map(|(f, _)| f).collect();
                centers.dedup_by(|a, b| (*a - *b).abs() < 1.0);
                let at = if sys.field.norm() == 0.0 { sys.d } else { centers[0] };
                let rates = self.rates.ok_or_else(|| {
                    nvltm_core::Error::InvalidInput("absorption profile needs a [rates] section".into())
                })?;
                let shift = AbsorptionShift {
                    rates,
                    centers,
                    fwhm: l.linewidth,
                    peak_mw_rate,
                    sigma: sigma * 1e4,
                    n_nv: ppm_to_cm3(nv_fraction * 1e6),
                    path_length: path_length * 100.0,
                    kappa: 1.0,
                }
                .calibrate_kappa(at, l.mw_shift)?;
                ShiftProfile::Absorption(shift)
            }
        };
        let defaults = PiCurveModel::default();
        let (slope_off, slope_on) = match l.slopes {
            Slopes::Explicit { off, on } => (off, on),
            Slopes::Calibrated { .. } => (defaults.slope_off, defaults.slope_on),
        };
        let mut m = PiCurveModel {
            threshold_base: l.threshold_base,
            slope_off,
            slope_on,
            step_power: l.step_power,
            floor_power: l.floor_power,
            hysteresis: l.hysteresis,
            pump_shift: l.pump_shift,
            reference_shift: l.mw_shift,
            mw_shift,
        };
        if let Slopes::Calibrated { far, threshold } = l.slopes {
            m = calibrate_contrast(&m, far, threshold)?;
        }
        m.validate()?;
        Ok(m)
    }

    /// Builds the forward models once so that inconsistent settings are
    /// reported at parse time with the offending section's line.
    fn check_models(&self, sections: &[RawSection]) -> Result<(), ConfigErrors> {
        let line_of = |name: &str| sections.iter().find(|s| s.name == name).map_or(0, |s| s.line);
        let fail = |section: &str, e: nvltm_core::Error| {
            ConfigErrors(vec![ConfigError {
                line: line_of(section),
                kind: ConfigErrorKind::Invalid {
                    section: section.into(),
                    msg: e.to_string(),
                },
            }])
        };
        if let Some(spin) = &self.spin {
            spin.system().validate().map_err(|e| fail("spin", e))?;
        }
        self.model().map_err(|e| fail("laser", e))?;
        self.detector().validate().map_err(|e| fail("acquisition", e))?;
        Ok(())
    }

    /// SHA-256 of the canonical text, excluding the output name.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical(false).as_bytes());
        hex::encode(h.finalize())
    }

    fn canonical(&self, with_name: bool) -> String {
        let mut out = String::new();
        let mut p = Printer { out: &mut out };
        p.section("run");
        p.word("scenario", self.kind().id());
        if let Some(seed) = self.run.seed {
            p.word("seed", &seed.to_string());
        }
        if with_name {
            p.word("name", &self.run.name);
        }
        if let Some(s) = &self.spin {
            p.section("spin");
            p.q("D", s.d, Dim::Frequency);
            p.q("E", s.e, Dim::Frequency);
            p.q("gamma_e", s.gamma_e, Dim::Gyromagnetic);
            p.q("B", s.field, Dim::Field);
            p.list("B_direction", &s.direction, Dim::Ratio);
        }
        if let Some(r) = &self.rates {
            p.section("rates");
            for (k, v) in [
                ("k_rad", r.k_rad),
                ("k35", r.k35),
                ("k45", r.k45),
                ("k56", r.k56),
                ("k61", r.k61),
                ("k62", r.k62),
                ("w_pump", r.w_pump),
                ("w_mw", r.w_mw),
            ] {
                p.q(k, v, Dim::Rate);
            }
        }
        if let Some(c) = &self.cavity {
            p.section("cavity");
            p.q("R1", c.r1, Dim::Ratio);
            p.q("R_ff", c.r_ff, Dim::Ratio);
            p.q("R2", c.r2, Dim::Ratio);
            p.q("eta_overlap", c.eta_overlap, Dim::Ratio);
            p.q("L_int", c.l_int, Dim::Length);
            p.q("L_ext", c.l_ext, Dim::Length);
        }
        let l = &self.laser;
        p.section("laser");
        p.q("I_th_base", l.threshold_base, Dim::Current);
        match l.slopes {
            Slopes::Explicit { off, on } => {
                p.q("slope_off", off, Dim::Slope);
                p.q("slope_on", on, Dim::Slope);
            }
            Slopes::Calibrated { far, threshold } => {
                p.q("contrast_far", far, Dim::Ratio);
                p.q("contrast_threshold", threshold, Dim::Ratio);
            }
        }
        p.q("P_step", l.step_power, Dim::Power);
        p.q("P_floor", l.floor_power, Dim::Power);
        p.q("dI_hyst", l.hysteresis, Dim::Current);
        p.q("dI_pump", l.pump_shift, Dim::Current);
        p.q("dI_mw", l.mw_shift, Dim::Current);
        p.q("linewidth", l.linewidth, Dim::Frequency);
        match l.profile {
            MwProfile::ZeroField => p.word("mw_profile", "zero_field"),
            MwProfile::Biased { line_shift } => {
                p.word("mw_profile", "biased");
                p.q("line_shift", line_shift, Dim::Current);
            }
            MwProfile::Absorption {
                peak_mw_rate,
                sigma,
                nv_fraction,
                path_length,
            } => {
                p.word("mw_profile", "absorption");
                p.q("peak_mw_rate", peak_mw_rate, Dim::Rate);
                p.q("sigma", sigma, Dim::Area);
                p.q("nv_density", nv_fraction, Dim::Ratio);
                p.q("path_length", path_length, Dim::Length);
            }
        }
        if let Some(m) = &self.modulation {
            p.section("modulation");
            match *m {
                ModulationSpec::CurrentSawtooth {
                    f_mod,
                    start,
                    range,
                    rise_fraction,
                } => {
                    p.word("kind", "current_sawtooth");
                    p.q("f_mod", f_mod, Dim::Frequency);
                    p.q("start", start, Dim::Current);
                    p.q("range", range, Dim::Current);
                    p.q("rise_fraction", rise_fraction, Dim::Ratio);
                }
                ModulationSpec::AmSquare { f_mod, duty } => {
                    p.word("kind", "am_square");
                    p.q("f_mod", f_mod, Dim::Frequency);
                    p.q("duty", duty, Dim::Ratio);
                }
                ModulationSpec::FmSine { f_mod, deviation } => {
                    p.word("kind", "fm_sine");
                    p.q("f_mod", f_mod, Dim::Frequency);
                    p.q("deviation", deviation, Dim::Frequency);
                }
            }
        }
        let n = &self.noise;
        p.section("noise");
        p.word("shot", if n.shot { "true" } else { "false" });
        p.q("electronic_floor", n.electronic_floor, Dim::VoltDensity);
        p.q("rin", n.rin, Dim::RelDensity);
        let table: Vec<String> = n
            .rin_vs_current
            .knots()
            .iter()
            .map(|(r, m)| format!("{r:?}:{m:?}"))
            .collect();
        p.word("rin_table", &table.join(", "));
        p.q("line_50hz", n.line_50hz, Dim::Voltage);
        p.q("line_frequency", n.line_frequency, Dim::Frequency);
        p.q("drift_lowfreq", n.drift_lowfreq, Dim::Voltage);
        let a = &self.acquisition;
        p.section("acquisition");
        p.q("fs", a.fs, Dim::Frequency);
        p.q("duration", a.duration, Dim::Time);
        p.q("responsivity", a.responsivity, Dim::Responsivity);
        p.q("gain", a.gain, Dim::Transimpedance);
        match &self.scenario {
            Scenario::PiSweep(s) => {
                p.section("pi_sweep");
                let ids: Vec<&str> = s.conditions.iter().map(|c| c.id()).collect();
                p.word("conditions", &ids.join(", "));
                p.word("periods", &s.periods.to_string());
            }
            Scenario::AmOdmr(s) => {
                p.section("am_odmr");
                p.q("current", s.current, Dim::Current);
                p.grid(&s.grid);
                p.word("periods", &s.periods.to_string());
                p.word("peaks", &s.peaks.to_string());
            }
            Scenario::ThresholdOdmr(s) => {
                p.section("threshold_odmr");
                p.grid(&s.grid);
                p.word("periods", &s.periods.to_string());
                p.word("peaks", &s.peaks.to_string());
            }
            Scenario::FmLockin(s) => {
                p.section("fm_lockin");
                p.q("current", s.current, Dim::Current);
                if let Some(f) = s.f_line {
                    p.q("f_line", f, Dim::Frequency);
                }
                p.q("f_insensitive", s.f_insensitive, Dim::Frequency);
                p.q("enbw", s.enbw, Dim::Frequency);
                p.q("phase", s.phase, Dim::Angle);
                p.q("segment", s.segment, Dim::Time);
                p.q("band_lo", s.band.0, Dim::Frequency);
                p.q("band_hi", s.band.1, Dim::Frequency);
                p.q("scan_half_span", s.scan_half_span, Dim::Frequency);
                p.word("scan_points", &s.scan_points.to_string());
                p.q("inject_amplitude", s.inject_amplitude, Dim::Field);
                p.q("inject_frequency", s.inject_frequency, Dim::Frequency);
                p.q("export_f_max", s.export_f_max, Dim::Frequency);
            }
            Scenario::NoiseSurvey(s) => {
                p.section("noise_survey");
                p.list("currents", &s.currents, Dim::Current);
                p.q("f_mw", s.f_mw, Dim::Frequency);
                p.q("segment", s.segment, Dim::Time);
                p.q("export_f_max", s.export_f_max, Dim::Frequency);
            }
        }
        out
    }
}

struct Printer<'a> {
    out: &'a mut String,
}

impl Printer<'_> {
    fn section(&mut self, name: &str) {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        let _ = writeln!(self.out, "[{name}]");
    }

    fn word(&mut self, key: &str, value: &str) {
        let _ = writeln!(self.out, "{key} = {value}");
    }

    fn q(&mut self, key: &str, v: f64, dim: Dim) {
        let suffix = dim.si_suffix();
        if suffix.is_empty() {
            let _ = writeln!(self.out, "{key} = {v:?}");
        } else {
            let _ = writeln!(self.out, "{key} = {v:?} {suffix}");
        }
    }

    fn list(&mut self, key: &str, v: &[f64], dim: Dim) {
        let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
        let suffix = dim.si_suffix();
        let sep = if suffix.is_empty() { "" } else { " " };
        let _ = writeln!(self.out, "{key} = {}{sep}{suffix}", items.join(", "));
    }

    fn grid(&mut self, g: &FrequencyGrid) {
        self.q("f_start", g.start, Dim::Frequency);
        self.q("f_stop", g.stop, Dim::Frequency);
        self.word("points", &g.points.to_string());
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical(true))
    }
}
