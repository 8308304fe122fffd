//! Segment-averaged one-sided linear spectral density.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{SpectralDensity, Units};
use crate::error::{Error, Result};
use crate::synth::TimeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsdOptions {
    pub segment_seconds: f64,
    /// Fractional overlap between consecutive segments, in `[0, 1)`.
    pub overlap: f64,
    pub window: Window,
}

impl Default for LsdOptions {
    fn default() -> Self {
        Self {
            segment_seconds: 1.0,
            overlap: 0.0,
            window: Window::Rectangular,
        }
    }
}

struct Plan {
    n: usize,
    hop: usize,
    fft: Arc<dyn Fft<f64>>,
    window: Option<Vec<f64>>,
    /// Σw² (N for the rectangular window).
    norm: f64,
}

impl Plan {
    fn new(fs: f64, opts: &LsdOptions) -> Result<Self> {
        if !(fs > 0.0) {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if !(opts.segment_seconds > 0.0) || !(0.0..1.0).contains(&opts.overlap) {
            return Err(Error::InvalidInput(
                "segment length must be positive and overlap in [0, 1)".into(),
            ));
        }
        let n = (opts.segment_seconds * fs).round() as usize;
        if n < 2 {
            return Err(Error::InvalidInput("segment shorter than two samples".into()));
        }
        let hop = (((1.0 - opts.overlap) * n as f64).round() as usize).max(1);
        let window = match opts.window {
            Window::Rectangular => None,
            Window::Hann => Some(
                (0..n)
                    .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
                    .collect::<Vec<_>>(),
            ),
        };
        let norm = window
            .as_ref()
            .map(|w| w.iter().map(|x| x * x).sum())
            .unwrap_or(n as f64);
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Self {
            n,
            hop,
            fft,
            window,
            norm,
        })
    }

    /// Adds `|X_k|²` of one segment to `acc` (bins 0..=N/2).
    fn accumulate(&self, seg: &[f64], buf: &mut Vec<Complex<f64>>, scratch: &mut Vec<Complex<f64>>, acc: &mut [f64]) {
        buf.clear();
        match &self.window {
            None => buf.extend(seg.iter().map(|&x| Complex::new(x, 0.0))),
            Some(w) => buf.extend(seg.iter().zip(w).map(|(&x, &w)| Complex::new(x * w, 0.0))),
        }
        scratch.resize(self.fft.get_inplace_scratch_len(), Complex::default());
        self.fft.process_with_scratch(buf, scratch);
        for (a, x) in acc.iter_mut().zip(buf.iter()) {
            *a += x.norm_sqr();
        }
    }

    fn finish(&self, fs: f64, power: &[f64], segments: usize, units: Units) -> SpectralDensity {
        let n = self.n;
        let last = n / 2;
        let freqs = (0..=last).map(|k| k as f64 * fs / n as f64).collect();
        let values = power
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let one_sided = if k == 0 || (n.is_multiple_of(2) && k == last) { 1.0 } else { 2.0 };
                (one_sided * p / (segments as f64 * fs * self.norm)).sqrt()
            })
            .collect();
        SpectralDensity {
            freqs,
            values,
            units,
            n_segments: segments,
        }
    }
}

/// Streaming estimator: push samples in order, then [`finish`](Self::finish).
pub struct LsdAccumulator {
    fs: f64,
    plan: Plan,
    pending: Vec<f64>,
    power: Vec<f64>,
    segments: usize,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl LsdAccumulator {
    pub fn new(fs: f64, opts: LsdOptions) -> Result<Self> {
        let plan = Plan::new(fs, &opts)?;
        let bins = plan.n / 2 + 1;
        Ok(Self {
            fs,
            pending: Vec::with_capacity(plan.n),
            power: vec![0.0; bins],
            segments: 0,
            buf: Vec::with_capacity(plan.n),
            scratch: Vec::new(),
            plan,
        })
    }

    pub fn push(&mut self, samples: &[f64]) {
        let mut rest = samples;
        while !rest.is_empty() {
            let take = (self.plan.n - self.pending.len()).min(rest.len());
            self.pending.extend_from_slice(&rest[..take]);
            rest = &rest[take..];
            if self.pending.len() == self.plan.n {
                self.plan
                    .accumulate(&self.pending, &mut self.buf, &mut self.scratch, &mut self.power);
                self.segments += 1;
                self.pending.drain(..self.plan.hop.min(self.plan.n));
            }
        }
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Incomplete trailing samples are discarded.
    pub fn finish(self, units: Units) -> Result<SpectralDensity> {
        if self.segments == 0 {
            return Err(Error::InsufficientData(format!(
                "fewer than one full segment of {} samples",
                self.plan.n
            )));
        }
        Ok(self.plan.finish(self.fs, &self.power, self.segments, units))
    }
}

/// Segments per parallel work unit. Fixed so the summation order, and
/// hence every bit of the result, does not depend on the thread count.
const SEGMENTS_PER_TASK: usize = 4;

pub fn lsd_with(trace: &TimeTrace, opts: LsdOptions) -> Result<SpectralDensity> {
    trace.validate()?;
    let plan = Plan::new(trace.fs, &opts)?;
    let len = trace.samples.len();
    if len < plan.n {
        return Err(Error::InsufficientData(format!(
            "trace of {len} samples is shorter than one {}-sample segment",
            plan.n
        )));
    }
    let starts: Vec<usize> = (0..=(len - plan.n) / plan.hop).map(|k| k * plan.hop).collect();
    let bins = plan.n / 2 + 1;
    let partials: Vec<Vec<f64>> = starts
        .par_chunks(SEGMENTS_PER_TASK)
        .map(|group| {
            let mut acc = vec![0.0; bins];
            let mut buf = Vec::with_capacity(plan.n);
            let mut scratch = Vec::new();
            for &s in group {
                plan.accumulate(&trace.samples[s..s + plan.n], &mut buf, &mut scratch, &mut acc);
            }
            acc
        })
        .collect();
    let mut power = vec![0.0; bins];
    for part in &partials {
        for (p, q) in power.iter_mut().zip(part) {
            *p += q;
        }
    }
    Ok(plan.finish(trace.fs, &power, starts.len(), Units::VoltsPerRootHz))
}

/// Rectangular-window, non-overlapping, power-averaged density (V/√Hz).
pub fn lsd(trace: &TimeTrace, segment_seconds: f64) -> Result<SpectralDensity> {
    lsd_with(
        trace,
        LsdOptions {
            segment_seconds,
            ..Default::default()
        },
    )
}
