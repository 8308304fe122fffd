//! Digital lock-in: mixing with `√2·cos` and a cascade of identical
//! one-pole low-pass stages. The `√2` makes a matched coherent input
//! `A·cos(2π f_ref t + phase)` read `A/√2` (RMS convention).

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::synth::{TimeTrace, TraceMeta};

pub const LOCKIN_STAGES: usize = 4;

/// Equivalent noise bandwidth (Hz) of `LOCKIN_STAGES` one-pole stages with
/// smoothing factor `alpha` at sample rate `fs`: `fs·Σh²/(2(Σh)²)`.
pub fn cascade_enbw(alpha: f64, fs: f64) -> f64 {
    // impulse response via the stage recursion until the tail is negligible
    let mut state = [0.0f64; LOCKIN_STAGES];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut n = 0usize;
    loop {
        let mut x = if n == 0 { 1.0 } else { 0.0 };
        for s in state.iter_mut() {
            *s += alpha * (x - *s);
            x = *s;
        }
        sum += x;
        sum_sq += x * x;
        n += 1;
        if n > 64 && x * x < 1e-20 * sum_sq && x < 1e-14 * sum {
            break;
        }
    }
    fs * sum_sq / (2.0 * sum * sum)
}

#[derive(Debug, Clone)]
pub struct LockIn {
    fs: f64,
    f_ref: f64,
    phase: f64,
    alpha: f64,
    cutoff: f64,
    enbw: f64,
    x: [f64; LOCKIN_STAGES],
    y: [f64; LOCKIN_STAGES],
    n: usize,
}

impl LockIn {
    /// Calibrates the stage cutoff so the cascade ENBW equals `enbw`.
    pub fn new(fs: f64, f_ref: f64, phase: f64, enbw: f64) -> Result<Self> {
        if !(fs > 0.0 && f_ref > 0.0 && enbw > 0.0) {
            return Err(Error::InvalidInput("fs, f_ref and enbw must be positive".into()));
        }
        if f_ref >= fs / 2.0 {
            return Err(Error::AliasingConfig(format!(
                "reference {f_ref} Hz at or above Nyquist ({} Hz)",
                fs / 2.0
            )));
        }
        if enbw >= 2.0 * f_ref {
            return Err(Error::AliasingConfig(format!(
                "ENBW {enbw} Hz must be below twice the reference frequency {f_ref} Hz"
            )));
        }
        let alpha_of = |fc: f64| 1.0 - (-2.0 * PI * fc / fs).exp();
        let (mut lo, mut hi) = (enbw / 10.0, (enbw * 10.0).min(fs / 2.0));
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if cascade_enbw(alpha_of(mid), fs) < enbw {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-9 * enbw {
                break;
            }
        }
        let cutoff = 0.5 * (lo + hi);
        let alpha = alpha_of(cutoff);
        Ok(Self {
            fs,
            f_ref,
            phase,
            alpha,
            cutoff,
            enbw: cascade_enbw(alpha, fs),
            x: [0.0; LOCKIN_STAGES],
            y: [0.0; LOCKIN_STAGES],
            n: 0,
        })
    }

    /// Per-stage −3 dB frequency, Hz.
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Achieved ENBW, Hz.
    pub fn enbw(&self) -> f64 {
        self.enbw
    }

    /// Per-stage time constant, s.
    pub fn time_constant(&self) -> f64 {
        1.0 / (2.0 * PI * self.cutoff)
    }

    /// Time for the cascade step response to come within 1e-5 of its
    /// final value, s.
    pub fn settling_time(&self) -> f64 {
        let mut state = [0.0f64; LOCKIN_STAGES];
        let mut n = 0usize;
        loop {
            let mut x = 1.0;
            for s in state.iter_mut() {
                *s += self.alpha * (x - *s);
                x = *s;
            }
            n += 1;
            if 1.0 - x < 1e-5 {
                return n as f64 / self.fs;
            }
        }
    }

    /// Demodulates the next block; appends in-phase and quadrature outputs.
    /// Sample indices continue from the previous call.
    pub fn process(&mut self, input: &[f64], x_out: &mut Vec<f64>, y_out: &mut Vec<f64>) {
        let a = self.alpha;
        let w = self.f_ref / self.fs;
        for &v in input {
            let theta = 2.0 * PI * (w * self.n as f64).fract() + self.phase;
            let (s, c) = theta.sin_cos();
            let mut xi = SQRT_2 * c * v;
            let mut yi = SQRT_2 * s * v;
            for k in 0..LOCKIN_STAGES {
                self.x[k] += a * (xi - self.x[k]);
                xi = self.x[k];
                self.y[k] += a * (yi - self.y[k]);
                yi = self.y[k];
            }
            x_out.push(xi);
            y_out.push(yi);
            self.n += 1;
        }
    }
}

/// In-phase and quadrature outputs.
pub fn lockin_demodulate_iq(
    trace: &TimeTrace,
    f_ref: f64,
    phase: f64,
    enbw: f64,
) -> Result<(TimeTrace, TimeTrace)> {
    trace.validate()?;
    // absorb the trace start time into the reference phase
    let phase = phase + 2.0 * PI * (f_ref * trace.t0).fract();
    let mut li = LockIn::new(trace.fs, f_ref, phase, enbw)?;
    let mut x = Vec::with_capacity(trace.samples.len());
    let mut y = Vec::with_capacity(trace.samples.len());
    li.process(&trace.samples, &mut x, &mut y);
    let meta = |tag: &str| TraceMeta {
        protocol: format!("{} | lockin {tag} f_ref={f_ref:?} enbw={enbw:?}", trace.meta.protocol),
        ..trace.meta.clone()
    };
    Ok((
        TimeTrace::new(x, trace.fs, trace.t0, meta("X"))?,
        TimeTrace::new(y, trace.fs, trace.t0, meta("Y"))?,
    ))
}

/// In-phase output only.
pub fn lockin_demodulate(trace: &TimeTrace, f_ref: f64, phase: f64, enbw: f64) -> Result<TimeTrace> {
    Ok(lockin_demodulate_iq(trace, f_ref, phase, enbw)?.0)
}
