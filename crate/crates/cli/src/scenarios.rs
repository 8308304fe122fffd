//! Synthesis and analysis pipelines behind each scenario.

use std::path::Path;

use rayon::prelude::*;

use nvltm_core::analysis::{
    am_levels, fit_lorentzian, fit_threshold, lorentzian_sum, odmr_contrast, LsdAccumulator, LsdOptions,
};
use nvltm_core::cavity::{effective_reflectivity, finesse, round_trips};
use nvltm_core::laser::{contrast_vs_current, pi_curve, ContrastVariant};
use nvltm_core::magnetometry::FmMagnetometer;
use nvltm_core::nv_spin::{sorted_transitions, t2star_from_linewidth};
use nvltm_core::rng::child_seed;
use nvltm_core::synth::{
    reconstruct_branches, synth_am_odmr, synth_pi_sweep, Acquisition, FieldInjection, Synthesizer, TraceStream,
};
use nvltm_core::{Error, FitResult, LaserState, ModulationSpec, MwDrive, PiCurveModel, Pump, SpectralDensity, Units};

use crate::config::{
    AmOdmrParams, Condition, ExperimentConfig, FmLockinParams, NoiseSurveyParams, PiSweepParams, Scenario,
    ThresholdOdmrParams,
};
use crate::csv_io::{Column, Table};
use crate::error::{CliResult, Context};
use crate::output::OutputDir;
use crate::report::RunReport;

/// Runs the configured scenario and writes its outputs under
/// `out_base/<run name>/`. On failure nothing written by this run is left
/// behind.
pub fn run_scenario(cfg: &ExperimentConfig, out_base: &Path) -> CliResult<RunReport> {
    let mut out = OutputDir::create(&out_base.join(&cfg.run.name))?;
    let mut rep = RunReport::new(cfg.kind().id(), &cfg.hash(), cfg.run.seed);
    let id = cfg.kind().id();
    let model = cfg.model().context(|| format!("{id}: building the laser model"))?;
    model_quantities(cfg, &model, &mut rep)?;
    match &cfg.scenario {
        Scenario::PiSweep(p) => pi_sweep(cfg, &model, p, &mut out, &mut rep)?,
        Scenario::AmOdmr(p) => am_odmr(cfg, &model, p, &mut out, &mut rep)?,
        Scenario::ThresholdOdmr(p) => threshold_odmr(cfg, &model, p, &mut out, &mut rep)?,
        Scenario::FmLockin(p) => fm_lockin(cfg, &model, p, &mut out, &mut rep)?,
        Scenario::NoiseSurvey(p) => noise_survey(cfg, &model, p, &mut out, &mut rep)?,
    }
    out.write_bytes("config.txt", cfg.to_string().as_bytes())?;
    rep.files = out.manifest().to_vec();
    out.write_bytes("report.txt", rep.to_text().as_bytes())?;
    out.commit();
    Ok(rep)
}

/// Same as [`run_scenario`] on a dedicated pool of `workers` threads.
pub fn run_scenario_with_workers(cfg: &ExperimentConfig, out_base: &Path, workers: usize) -> CliResult<RunReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| crate::CliError::Report(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| run_scenario(cfg, out_base))
}

fn conditions(c: Condition) -> (Pump, MwDrive) {
    match c {
        Condition::Bare => (Pump::Off, MwDrive::Off),
        Condition::Pump => (Pump::On, MwDrive::Off),
        Condition::PumpMw => (Pump::On, MwDrive::OnResonance),
    }
}

/// Configured threshold ladder, contrast figures and cavity quantities.
fn model_quantities(cfg: &ExperimentConfig, m: &PiCurveModel, rep: &mut RunReport) -> CliResult<()> {
    let id = cfg.kind().id();
    for c in [Condition::Bare, Condition::Pump, Condition::PumpMw] {
        let (pump, mw) = conditions(c);
        let th = m.thresholds(pump, mw);
        rep.push(format!("threshold_forward_{}", c.id()), th.forward, "A");
        rep.push(format!("threshold_reverse_{}", c.id()), th.reverse, "A");
    }
    let reference = m.reference_reverse_on();
    rep.push("reference_current", reference, "A");
    let at_reference = contrast_vs_current(m, reference, ContrastVariant::Step)
        .context(|| format!("{id}: contrast at the reference current"))?;
    rep.push("contrast_limit", m.contrast_limit(), "frac");
    rep.push("contrast_at_reference", at_reference, "frac");
    rep.push("contrast_enhancement", at_reference / m.contrast_limit(), "1");
    let t2 = t2star_from_linewidth(cfg.laser.linewidth).context(|| format!("{id}: dephasing time"))?;
    rep.push("t2_star", t2, "s");
    if let Some(c) = &cfg.cavity {
        let re = effective_reflectivity(c).context(|| format!("{id}: cavity"))?;
        let f = finesse(c.r1, re).context(|| format!("{id}: cavity"))?;
        rep.push("cavity_effective_reflectivity", re, "frac");
        rep.push("cavity_finesse", f, "1");
        rep.push("cavity_round_trips", round_trips(f).context(|| format!("{id}: cavity"))?, "1");
    }
    Ok(())
}

/// Threshold fit that reports a missing discontinuity as a warning.
fn soft_fit(currents: &[f64], volts: &[f64], what: &str, rep: &mut RunReport) -> CliResult<Option<FitResult>> {
    match fit_threshold(currents, volts) {
        Ok(f) => Ok(Some(f)),
        Err(e @ (Error::NoThreshold(_) | Error::InsufficientData(_))) => {
            rep.warnings.push(format!("{what}: {e}"));
            Ok(None)
        }
        Err(e) => Err(e).context(|| what.to_string()),
    }
}

fn split(points: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    points.iter().copied().unzip()
}

fn sweep_acquisition(cfg: &ExperimentConfig, periods: u64) -> (ModulationSpec, Acquisition) {
    let sweep = cfg.modulation.expect("validated scenario has a modulation section");
    let mut acq = cfg.acquisition();
    acq.duration = periods as f64 / sweep.f_mod();
    (sweep, acq)
}

fn pi_sweep(
    cfg: &ExperimentConfig,
    model: &PiCurveModel,
    p: &PiSweepParams,
    out: &mut OutputDir,
    rep: &mut RunReport,
) -> CliResult<()> {
    let (sweep, acq) = sweep_acquisition(cfg, p.periods);
    let vpw = acq.detector.volts_per_watt();
    let traces = p
        .conditions
        .par_iter()
        .enumerate()
        .map(|(k, &c)| {
            let (pump, mw) = conditions(c);
            let acq = Acquisition {
                seed: child_seed(acq.seed, k as u64),
                ..acq.clone()
            };
            synth_pi_sweep(model, sweep, pump, mw, &acq).context(|| format!("pi_sweep: condition {}", c.id()))
        })
        .collect::<CliResult<Vec<_>>>()?;
    for (&c, trace) in p.conditions.iter().zip(&traces) {
        rep.warnings.extend(trace.meta.warnings.iter().map(|w| format!("{}: {w}", c.id())));
        let n = trace.samples.len();
        let time: Vec<f64> = (0..n).map(|i| trace.time(i)).collect();
        let current: Vec<f64> = time.iter().map(|&t| sweep.current_at(t).unwrap_or(f64::NAN)).collect();
        out.write_table(
            &format!("pi_{}.csv", c.id()),
            &Table::new(vec![
                Column::new("time", "s", time),
                Column::new("current", "A", current),
                Column::new("voltage", "V", trace.samples.clone()),
            ]),
        )?;
        let branches = reconstruct_branches(trace, &sweep).context(|| "pi_sweep: branches".into())?;
        for (dir, pts) in [("forward", &branches.forward), ("reverse", &branches.reverse)] {
            let (i, v) = split(pts);
            let what = format!("pi_sweep: {dir} threshold, condition {}", c.id());
            if let Some(fit) = soft_fit(&i, &v, &what, rep)? {
                let tag = format!("{dir}_{}", c.id());
                rep.push_err(format!("fit_threshold_{tag}"), fit.value("I_th"), fit.stderr("I_th"), "A");
                if dir == "forward" {
                    rep.push(format!("fit_step_power_{tag}"), fit.value("P_step") / vpw, "W");
                    rep.push(format!("fit_slope_{tag}"), fit.value("slope") / vpw, "W/A");
                    rep.push(format!("fit_floor_power_{tag}"), fit.value("P_floor") / vpw, "W");
                }
            }
        }
    }
    Ok(())
}

fn lorentz_params(fit: &FitResult, peaks: usize) -> Vec<f64> {
    let mut p = vec![fit.value("offset")];
    for k in 1..=peaks {
        p.extend([
            fit.value(&format!("center{k}")),
            fit.value(&format!("fwhm{k}")),
            fit.value(&format!("amplitude{k}")),
        ]);
    }
    p
}

/// Maximum of the fitted curve over `[lo, hi]`.
fn fitted_peak(fit: &FitResult, peaks: usize, lo: f64, hi: f64) -> f64 {
    let p = lorentz_params(fit, peaks);
    let n = 10_001;
    (0..n)
        .map(|k| lorentzian_sum(lo + (hi - lo) * k as f64 / (n - 1) as f64, &p))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn push_lorentz(rep: &mut RunReport, prefix: &str, fit: &FitResult, value_unit: &str) {
    for p in &fit.params {
        let unit = if p.unit == "value" { value_unit } else { p.unit.as_str() };
        rep.push_err(format!("{prefix}_{}", p.name), p.value, p.stderr, unit);
    }
    rep.push(format!("{prefix}_residual_rms"), fit.residual_rms, value_unit);
    if !fit.converged {
        rep.warnings.push(format!("{prefix}: Lorentzian fit did not converge"));
    }
}

fn am_odmr(
    cfg: &ExperimentConfig,
    model: &PiCurveModel,
    p: &AmOdmrParams,
    out: &mut OutputDir,
    rep: &mut RunReport,
) -> CliResult<()> {
    let (am, acq) = sweep_acquisition(cfg, p.periods);
    let freqs = p.grid.values();
    let traces = synth_am_odmr(model, p.current, &freqs, am, &acq).context(|| "am_odmr: synthesis".into())?;
    let mut v_off = Vec::with_capacity(freqs.len());
    let mut v_on = Vec::with_capacity(freqs.len());
    let mut contrast = Vec::with_capacity(freqs.len());
    for (f, trace) in freqs.iter().zip(&traces) {
        let (off, on) = am_levels(trace, &am).context(|| format!("am_odmr: levels at {f} Hz"))?;
        contrast.push(odmr_contrast(on, off).context(|| format!("am_odmr: contrast at {f} Hz"))?);
        v_off.push(off);
        v_on.push(on);
    }
    rep.push("drive_current", p.current, "A");
    rep.push("drive_current_ratio", p.current / model.reference_reverse_on(), "1");
    let max = contrast.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    rep.push("max_contrast", max, "frac");
    let mid = traces.len() / 2;
    let trace = &traces[mid];
    out.write_table(
        "am_trace_center.csv",
        &Table::new(vec![
            Column::new("time", "s", (0..trace.samples.len()).map(|i| trace.time(i)).collect()),
            Column::new("voltage", "V", trace.samples.clone()),
        ]),
    )?;
    if p.peaks > 0 {
        let fit = fit_lorentzian(&freqs, &contrast, p.peaks as usize, None)
            .context(|| "am_odmr: Lorentzian fit".into())?;
        push_lorentz(rep, "odmr", &fit, "frac");
    }
    out.write_table(
        "odmr.csv",
        &Table::new(vec![
            Column::new("frequency", "Hz", freqs),
            Column::new("v_off", "V", v_off),
            Column::new("v_on", "V", v_on),
            Column::new("contrast", "1", contrast),
        ]),
    )?;
    Ok(())
}

fn threshold_odmr(
    cfg: &ExperimentConfig,
    model: &PiCurveModel,
    p: &ThresholdOdmrParams,
    out: &mut OutputDir,
    rep: &mut RunReport,
) -> CliResult<()> {
    let (sweep, acq) = sweep_acquisition(cfg, p.periods);
    let freqs = p.grid.values();
    // index 0 is the microwave-off reference sweep
    let fits = (0..=freqs.len())
        .into_par_iter()
        .map(|k| {
            let mw = if k == 0 { MwDrive::Off } else { MwDrive::At(freqs[k - 1]) };
            let what = || match mw {
                MwDrive::At(f) => format!("threshold_odmr: sweep at {f} Hz"),
                _ => "threshold_odmr: reference sweep".into(),
            };
            let acq = Acquisition {
                seed: child_seed(acq.seed, k as u64),
                ..acq.clone()
            };
            let trace = synth_pi_sweep(model, sweep, Pump::On, mw, &acq).context(what)?;
            let b = reconstruct_branches(&trace, &sweep).context(what)?;
            let (fi, fv) = split(&b.forward);
            let (ri, rv) = split(&b.reverse);
            let fwd = fit_threshold(&fi, &fv).context(what)?;
            let rev = fit_threshold(&ri, &rv).context(what)?;
            Ok((fwd.value("I_th"), rev.value("I_th")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let (ref_f, ref_r) = fits[0];
    let forward: Vec<f64> = fits[1..].iter().map(|f| f.0).collect();
    let reverse: Vec<f64> = fits[1..].iter().map(|f| f.1).collect();
    let d_fwd: Vec<f64> = forward.iter().map(|i| i - ref_f).collect();
    let d_rev: Vec<f64> = reverse.iter().map(|i| i - ref_r).collect();
    rep.push("fit_threshold_forward_off", ref_f, "A");
    rep.push("fit_threshold_reverse_off", ref_r, "A");
    let peaks = p.peaks as usize;
    for (tag, delta) in [("forward", &d_fwd), ("reverse", &d_rev)] {
        let fit = fit_lorentzian(&freqs, delta, peaks, None)
            .context(|| format!("threshold_odmr: Lorentzian fit, {tag} thresholds"))?;
        push_lorentz(rep, &format!("odmr_{tag}"), &fit, "A");
        let peak = fitted_peak(&fit, peaks, p.grid.start, p.grid.stop);
        rep.push(format!("odmr_{tag}_peak_shift"), peak, "A");
        let measured = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        rep.push(format!("odmr_{tag}_max_measured_shift"), measured, "A");
    }
    out.write_table(
        "threshold_odmr.csv",
        &Table::new(vec![
            Column::new("frequency", "Hz", freqs),
            Column::new("threshold_forward", "A", forward),
            Column::new("threshold_reverse", "A", reverse),
            Column::new("delta_forward", "A", d_fwd),
            Column::new("delta_reverse", "A", d_rev),
        ]),
    )?;
    Ok(())
}

/// Density columns up to `f_max`, starting with the shared frequency axis.
fn spectrum_table(f_max: f64, cols: &[(&str, &str, &SpectralDensity)]) -> Table {
    let freqs = &cols[0].2.freqs;
    let n = freqs.iter().take_while(|f| **f <= f_max).count().max(1);
    let mut columns = vec![Column::new("frequency", "Hz", freqs[..n].to_vec())];
    for (name, unit, sd) in cols {
        columns.push(Column::new(*name, *unit, sd.values[..n].to_vec()));
    }
    Table::new(columns)
}

fn fm_lockin(
    cfg: &ExperimentConfig,
    model: &PiCurveModel,
    p: &FmLockinParams,
    out: &mut OutputDir,
    rep: &mut RunReport,
) -> CliResult<()> {
    let Some(ModulationSpec::FmSine { f_mod, deviation }) = cfg.modulation else {
        unreachable!("validated scenario has an FM modulation section")
    };
    let sys = cfg.spin_system();
    let f_line = match p.f_line {
        Some(f) => f,
        None => sorted_transitions(&sys).context(|| "fm_lockin_magnetometry: transitions".into())?[0].0,
    };
    let mag = FmMagnetometer {
        model: model.clone(),
        current: p.current,
        f_line,
        f_insensitive: p.f_insensitive,
        f_mod,
        deviation,
        enbw: p.enbw,
        phase: p.phase,
        acquisition: cfg.acquisition(),
        segment_seconds: p.segment,
        gamma_e: sys.gamma_e,
        scan_half_span: p.scan_half_span,
        scan_points: p.scan_points as usize,
        band: p.band,
    };
    let ctx = |step: &str| {
        let s = format!("fm_lockin_magnetometry: {step}");
        move || s
    };
    let field = (p.inject_amplitude > 0.0).then_some(FieldInjection {
        amplitude: p.inject_amplitude,
        frequency: p.inject_frequency,
        gamma_e: sys.gamma_e,
    });
    let (scan_f, scan_x) = mag.slope_scan().context(ctx("slope scan"))?;
    let run = mag.run(field).context(ctx("measurement"))?;

    rep.push("drive_current", p.current, "A");
    rep.push("drive_current_ratio", p.current / model.reference_reverse_on(), "1");
    rep.push("operating_line", f_line, "Hz");
    rep.push("lockin_slope", run.slope.slope, "V/Hz");
    rep.push("zero_crossing", run.slope.crossing, "Hz");
    rep.push("laser_noise", run.laser_noise, "V/rtHz");
    rep.push("sensitivity", run.sensitivity, "T/rtHz");
    if let Some(f) = field {
        let df = run.sensitive.bin_width();
        let line = run.sensitive.at(f.frequency);
        rep.push("injected_amplitude", f.amplitude, "T");
        rep.push("injected_line_density", line, "T/rtHz");
        rep.push("injected_amplitude_recovered", line * (2.0 * df).sqrt(), "T");
    }

    out.write_table(
        "slope_scan.csv",
        &Table::new(vec![
            Column::new("frequency", "Hz", scan_f),
            Column::new("lockin_x", "V", scan_x),
        ]),
    )?;
    out.write_table(
        "lsd_sensitive.csv",
        &spectrum_table(
            p.export_f_max,
            &[
                ("voltage_density", "V/rtHz", &run.sensitive_volts),
                ("field_density", "T/rtHz", &run.sensitive),
                ("detector_density", "V/rtHz", &run.sensitive_raw),
            ],
        ),
    )?;
    out.write_table(
        "lsd_insensitive.csv",
        &spectrum_table(
            p.export_f_max,
            &[
                ("voltage_density", "V/rtHz", &run.insensitive_volts),
                ("field_density", "T/rtHz", &run.insensitive),
            ],
        ),
    )?;
    Ok(())
}

/// Laser held at a fixed current with the microwave at a fixed frequency.
struct SteadyLaser {
    power: f64,
    ratio: f64,
}

impl SteadyLaser {
    fn new(model: &PiCurveModel, current: f64, f_mw: f64) -> Self {
        let (power, _) = pi_curve(model, current, LaserState::lasing_from_above(), Pump::On, MwDrive::At(f_mw));
        Self {
            power,
            ratio: current / model.reference_reverse_on(),
        }
    }
}

impl Synthesizer for SteadyLaser {
    fn fill_power(&mut self, _start: usize, _fs: f64, power: &mut [f64]) {
        power.fill(self.power);
    }

    fn current_ratio(&self) -> f64 {
        self.ratio
    }
}

fn noise_survey(
    cfg: &ExperimentConfig,
    model: &PiCurveModel,
    p: &NoiseSurveyParams,
    out: &mut OutputDir,
    rep: &mut RunReport,
) -> CliResult<()> {
    let acq = cfg.acquisition();
    let vpw = acq.detector.volts_per_watt();
    let opts = LsdOptions {
        segment_seconds: p.segment,
        ..Default::default()
    };
    let spectra = p
        .currents
        .par_iter()
        .enumerate()
        .map(|(k, &current)| {
            let what = move || format!("noise_survey: current {current} A");
            let laser = SteadyLaser::new(model, current, p.f_mw);
            let mean = laser.power * vpw;
            let acq = Acquisition {
                seed: child_seed(acq.seed, k as u64),
                ..acq.clone()
            };
            let mut stream = TraceStream::new(laser, &acq).context(what)?;
            let mut acc = LsdAccumulator::new(acq.fs, opts).context(what)?;
            let mut chunk = Vec::new();
            while stream.next_chunk(&mut chunk).context(what)? {
                acc.push(&chunk);
            }
            Ok((mean, acc.finish(Units::VoltsPerRootHz).context(what)?))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let reference = model.reference_reverse_on();
    let mut noise = Vec::new();
    let mut multipliers = Vec::new();
    for (k, (&current, (_, sd))) in p.currents.iter().zip(&spectra).enumerate() {
        let n = nvltm_core::analysis::laser_noise_metric(sd).context(|| "noise_survey: laser noise".into())?;
        let m = cfg.noise.rin_vs_current.eval(current / reference).unwrap_or(f64::NAN);
        rep.push(format!("laser_noise_{}", k + 1), n, "V/rtHz");
        rep.push(format!("current_{}", k + 1), current, "A");
        if m.is_nan() {
            rep.warnings.push(format!(
                "current {current} A lies outside the rin table; laser noise treated as zero"
            ));
        }
        noise.push(n);
        multipliers.push(if m.is_nan() { 0.0 } else { m });
    }
    out.write_table(
        "noise_levels.csv",
        &Table::new(vec![
            Column::new("current", "A", p.currents.clone()),
            Column::new("current_ratio", "1", p.currents.iter().map(|c| c / reference).collect()),
            Column::new("mean_voltage", "V", spectra.iter().map(|s| s.0).collect()),
            Column::new("laser_noise", "V/rtHz", noise),
            Column::new("rin_multiplier", "1", multipliers),
        ]),
    )?;
    let names: Vec<String> = (1..=p.currents.len()).map(|k| format!("density_{k}")).collect();
    let cols: Vec<(&str, &str, &SpectralDensity)> = names
        .iter()
        .zip(&spectra)
        .map(|(n, s)| (n.as_str(), "V/rtHz", &s.1))
        .collect();
    out.write_table("noise_spectra.csv", &spectrum_table(p.export_f_max, &cols))?;
    Ok(())
}
