use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use nvltm_bench::{white_trace, FS};
use nvltm_core::analysis::{fit_lorentzian, fit_threshold, lorentzian_sum, lsd, LockIn};
use nvltm_core::synth::{synth_pi_sweep, Acquisition};
use nvltm_core::{ModulationSpec, MwDrive, NoiseSpec, PiCurveModel, Pump};

fn spectral(c: &mut Criterion) {
    let trace = white_trace(4.0);
    let mut g = c.benchmark_group("lsd");
    g.throughput(Throughput::Elements(trace.samples.len() as u64));
    g.bench_function("4s_1s_segments", |b| b.iter(|| lsd(black_box(&trace), 1.0).unwrap()));
    g.finish();
}

fn lockin(c: &mut Criterion) {
    let trace = white_trace(1.0);
    let mut g = c.benchmark_group("lockin");
    g.throughput(Throughput::Elements(trace.samples.len() as u64));
    g.bench_function("1s_at_400k", |b| {
        b.iter_batched(
            || LockIn::new(FS, 1371.0, 0.0, 2.6e3).unwrap(),
            |mut li| {
                let (mut x, mut y) = (Vec::new(), Vec::new());
                li.process(black_box(&trace.samples), &mut x, &mut y);
                (x, y)
            },
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn fits(c: &mut Criterion) {
    let mut g = c.benchmark_group("fits");

    let currents: Vec<f64> = (0..4000).map(|k| 20e-3 + k as f64 * 2.5e-6).collect();
    let powers: Vec<f64> = currents
        .iter()
        .enumerate()
        .map(|(k, &i)| 3e-6 + if i > 26.75e-3 { 4e-4 + 0.1 * (i - 26.75e-3) } else { 0.0 } + 1e-7 * (k as f64).sin())
        .collect();
    g.bench_function("threshold_4000", |b| {
        b.iter(|| fit_threshold(black_box(&currents), black_box(&powers)).unwrap())
    });

    let p = [0.0, 2.8676e9, 6e6, -0.01, 2.8724e9, 6e6, -0.01];
    let freqs: Vec<f64> = (0..81).map(|k| 2.85e9 + k as f64 * 0.5e6).collect();
    let values: Vec<f64> = freqs
        .iter()
        .enumerate()
        .map(|(k, &f)| lorentzian_sum(f, &p) + 1e-4 * (2.0 * PI * k as f64 / 7.0).sin())
        .collect();
    g.bench_function("lorentzian_2peak_81", |b| {
        b.iter(|| fit_lorentzian(black_box(&freqs), black_box(&values), 2, None).unwrap())
    });
    g.finish();
}

fn synthesis(c: &mut Criterion) {
    let model = PiCurveModel::default();
    let sweep = ModulationSpec::default_sawtooth();
    let acq = Acquisition {
        noise: NoiseSpec::white(1e-6),
        seed: 7,
        ..Acquisition::clean(FS, 4.0 / sweep.f_mod())
    };
    let mut g = c.benchmark_group("synth");
    g.throughput(Throughput::Elements(acq.samples().unwrap() as u64));
    g.bench_function("pi_sweep_4_periods", |b| {
        b.iter(|| synth_pi_sweep(&model, sweep, Pump::On, MwDrive::OnResonance, black_box(&acq)).unwrap())
    });
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = spectral, lockin, fits, synthesis
}
criterion_main!(benches);
