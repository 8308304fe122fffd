use nalgebra::DMatrix;

use super::lm::{levenberg_marquardt, LmOptions, LmOutcome};
use super::{FitResult, Param};
use crate::error::{Error, Result};

/// `offset + Σ a_k / (1 + ((f - c_k)/(w_k/2))²)` with parameters laid out as
/// `[offset, c_1, w_1, a_1, c_2, w_2, a_2, ...]`.
#[inline]
pub fn lorentzian_sum(f: f64, p: &[f64]) -> f64 {
    let mut v = p[0];
    for peak in p[1..].chunks_exact(3) {
        let x = 2.0 * (f - peak[0]) / peak[1];
        v += peak[2] / (1.0 + x * x);
    }
    v
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Half-maximum width around index `k` of `y` (peak above `base`).
fn half_width(x: &[f64], y: &[f64], k: usize, base: f64) -> f64 {
    let half = base + 0.5 * (y[k] - base);
    let mut lo = k;
    while lo > 0 && y[lo] > half {
        lo -= 1;
    }
    let mut hi = k;
    while hi + 1 < y.len() && y[hi] > half {
        hi += 1;
    }
    (x[hi] - x[lo]).abs().max(2.0 * (x[1] - x[0]).abs())
}

/// Starting points from peak picking, in normalised coordinates.
fn initial_guesses(x: &[f64], y: &[f64], n_peaks: usize) -> Vec<Vec<f64>> {
    let base = median(y);
    let k = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
    let amp = y[k] - base;
    let w = half_width(x, y, k, base);
    if n_peaks == 1 {
        return vec![vec![base, x[k], w, amp]];
    }
    let mut out = vec![vec![
        base,
        x[k] - w / 4.0,
        w / 2.0,
        0.7 * amp,
        x[k] + w / 4.0,
        w / 2.0,
        0.7 * amp,
    ]];
    // second local maximum of a lightly smoothed copy
    let smooth: Vec<f64> = (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(y.len() - 1);
            y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let maxima: Vec<usize> = (1..y.len() - 1)
        .filter(|&i| smooth[i] > smooth[i - 1] && smooth[i] >= smooth[i + 1])
        .collect();
    let far = maxima
        .iter()
        .copied()
        .filter(|&i| (x[i] - x[k]).abs() > w / 4.0)
        .max_by(|&a, &b| smooth[a].total_cmp(&smooth[b]));
    if let Some(j) = far {
        let wj = half_width(x, &smooth, j, base).min(w);
        out.push(vec![base, x[k], w.min(wj * 2.0) / 2.0, amp, x[j], wj, y[j] - base]);
    }
    out
}

/// Least-squares fit of `n_peaks` Lorentzians plus a constant offset.
///
/// Parameters: `offset`, and per peak `center{k}`, `fwhm{k}`,
/// `amplitude{k}` (peaks sorted by centre). Two-peak fits also report
/// `splitting`. `init` uses the same layout as [`lorentzian_sum`].
/// Amplitude and offset carry the unit `value`; see
/// [`FitResult::with_value_unit`].
pub fn fit_lorentzian(
    freqs: &[f64],
    values: &[f64],
    n_peaks: usize,
    init: Option<&[f64]>,
) -> Result<FitResult> {
    if !(1..=2).contains(&n_peaks) {
        return Err(Error::InvalidInput("n_peaks must be 1 or 2".into()));
    }
    let n_par = 3 * n_peaks + 1;
    if freqs.len() != values.len() {
        return Err(Error::InvalidInput("freqs and values differ in length".into()));
    }
    if freqs.len() < 3 * n_par {
        return Err(Error::InsufficientData(format!(
            "{} points, need at least {}",
            freqs.len(),
            3 * n_par
        )));
    }
    if freqs.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite data".into()));
    }
    let (fmin, fmax) = freqs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &f| (a.min(f), b.max(f)));
    let (ymin, ymax) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if ymax == ymin {
        return Err(Error::DegenerateFit("constant data".into()));
    }
    if fmax == fmin {
        return Err(Error::DegenerateFit("all frequencies equal".into()));
    }
    let fc = 0.5 * (fmin + fmax);
    let fs = 0.5 * (fmax - fmin);
    let y0 = median(values);
    // dips are fitted as negative amplitudes
    let sign = if ymax - y0 >= y0 - ymin { 1.0 } else { -1.0 };
    let ys = sign * (ymax - ymin);
    let x: Vec<f64> = freqs.iter().map(|f| (f - fc) / fs).collect();
    let y: Vec<f64> = values.iter().map(|v| (v - y0) / ys).collect();

    let to_norm = |p: &[f64]| -> Vec<f64> {
        let mut q = vec![(p[0] - y0) / ys];
        for peak in p[1..].chunks_exact(3) {
            q.extend([(peak[0] - fc) / fs, peak[1] / fs, peak[2] / ys]);
        }
        q
    };
    let starts = match init {
        Some(p) if p.len() == n_par => vec![to_norm(p)],
        Some(p) => {
            return Err(Error::InvalidInput(format!(
                "init has {} entries, expected {n_par}",
                p.len()
            )))
        }
        None => initial_guesses(&x, &y, n_peaks),
    };

    let m = x.len();
    let fit_from = |p0: &[f64]| -> LmOutcome {
        levenberg_marquardt(
            |p, r| {
                for i in 0..m {
                    r[i] = lorentzian_sum(x[i], p) - y[i];
                }
            },
            p0,
            m,
            LmOptions::default(),
        )
    };
    let best = starts
        .iter()
        .map(|p0| fit_from(p0))
        .min_by(|a, b| a.rss.total_cmp(&b.rss))
        .expect("at least one start");

    // back to physical units; order peaks by centre
    let q = &best.params;
    let scale: Vec<f64> = std::iter::once(ys)
        .chain((0..n_peaks).flat_map(|_| [fs, fs, ys]))
        .collect();
    let dof = m.saturating_sub(n_par);
    let sigma2 = if dof > 0 { best.rss / dof as f64 } else { f64::INFINITY };
    let jtj = best.jacobian.transpose() * &best.jacobian;
    let cov: Option<DMatrix<f64>> = jtj.try_inverse().map(|inv| inv * sigma2);
    let var = |i: usize, j: usize| -> f64 {
        cov.as_ref()
            .map(|c| c[(i, j)] * scale[i] * scale[j])
            .unwrap_or(f64::INFINITY)
    };

    let mut order: Vec<usize> = (0..n_peaks).collect();
    order.sort_by(|&a, &b| q[1 + 3 * a].total_cmp(&q[1 + 3 * b]));
    let mut params = vec![Param {
        name: "offset".into(),
        unit: "value".into(),
        value: y0 + ys * q[0],
        stderr: var(0, 0).sqrt(),
    }];
    for (k, &src) in order.iter().enumerate() {
        let i = 1 + 3 * src;
        let tag = k + 1;
        params.push(Param {
            name: format!("center{tag}"),
            unit: "Hz".into(),
            value: fc + fs * q[i],
            stderr: var(i, i).sqrt(),
        });
        params.push(Param {
            name: format!("fwhm{tag}"),
            unit: "Hz".into(),
            value: (fs * q[i + 1]).abs(),
            stderr: var(i + 1, i + 1).sqrt(),
        });
        params.push(Param {
            name: format!("amplitude{tag}"),
            unit: "value".into(),
            value: ys * q[i + 2],
            stderr: var(i + 2, i + 2).sqrt(),
        });
    }
    if n_peaks == 2 {
        let (a, b) = (1 + 3 * order[0], 1 + 3 * order[1]);
        params.push(Param {
            name: "splitting".into(),
            unit: "Hz".into(),
            value: fs * (q[b] - q[a]),
            stderr: (var(a, a) + var(b, b) - 2.0 * var(a, b)).max(0.0).sqrt(),
        });
    }
    let residual_rms = ys.abs() * (best.rss / m as f64).sqrt();
    let finite = params.iter().all(|p| p.stderr.is_finite()) && residual_rms.is_finite();
    Ok(FitResult {
        params,
        residual_rms,
        converged: best.converged && finite,
        iterations: best.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn single_peak_exact() {
        let f = grid(200, 2.84e9, 2.90e9);
        let truth = [0.0, 2.87e9, 6.6e6, 0.01];
        let v: Vec<f64> = f.iter().map(|x| lorentzian_sum(*x, &truth)).collect();
        let fit = fit_lorentzian(&f, &v, 1, None).unwrap();
        assert!(fit.converged);
        assert!((fit.value("center1") / 2.87e9 - 1.0).abs() < 1e-9);
        assert!((fit.value("fwhm1") / 6.6e6 - 1.0).abs() < 1e-9);
        assert!((fit.value("amplitude1") / 0.01 - 1.0).abs() < 1e-9);
        assert!(fit.residual_rms < 1e-10 * 0.01);
    }

    #[test]
    fn blended_doublet_exact() {
        let f = grid(200, 2.85e9, 2.89e9);
        let truth = [1e-6, 2.87e9 - 2.45e6, 6.6e6, 0.01, 2.87e9 + 2.45e6, 6.6e6, 0.01];
        let v: Vec<f64> = f.iter().map(|x| lorentzian_sum(*x, &truth)).collect();
        let fit = fit_lorentzian(&f, &v, 2, None).unwrap();
        assert!(fit.converged);
        assert!((fit.value("splitting") / 4.9e6 - 1.0).abs() < 1e-6, "{}", fit.value("splitting"));
        assert!(fit.residual_rms < 1e-10 * 0.01);
    }

    #[test]
    fn dip_is_fitted() {
        let f = grid(100, -1.0, 1.0);
        let truth = [3.0, 0.1, 0.3, -0.5];
        let v: Vec<f64> = f.iter().map(|x| lorentzian_sum(*x, &truth)).collect();
        let fit = fit_lorentzian(&f, &v, 1, None).unwrap();
        assert!((fit.value("amplitude1") + 0.5).abs() < 1e-9);
        assert!((fit.value("offset") - 3.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_and_short_inputs() {
        let f = grid(50, 0.0, 1.0);
        assert!(matches!(fit_lorentzian(&f, &vec![2.0; 50], 1, None), Err(Error::DegenerateFit(_))));
        assert!(matches!(
            fit_lorentzian(&f[..11], &f[..11], 1, None),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn noisy_doublet_is_consistent() {
        let f = grid(200, 2.85e9, 2.89e9);
        let truth = [0.0, 2.87e9 - 2.45e6, 6.6e6, 0.01, 2.87e9 + 2.45e6, 6.6e6, 0.01];
        let noise = Normal::new(0.0, 0.01 / 20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = f.iter().map(|x| lorentzian_sum(*x, &truth) + noise.sample(&mut rng)).collect();
        let fit = fit_lorentzian(&f, &v, 2, None).unwrap();
        assert!(fit.converged);
        assert!((fit.value("splitting") - 4.9e6).abs() < 4.0 * fit.stderr("splitting"));
    }
}
