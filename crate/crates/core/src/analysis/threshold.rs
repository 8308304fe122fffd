use super::{FitResult, Param};
use crate::error::{Error, Result};

#[derive(Default, Clone, Copy)]
struct Sums {
    n: f64,
    u: f64,
    uu: f64,
    y: f64,
    yy: f64,
    uy: f64,
}

impl Sums {
    fn add(&mut self, u: f64, y: f64) {
        self.n += 1.0;
        self.u += u;
        self.uu += u * u;
        self.y += y;
        self.yy += y * y;
        self.uy += u * y;
    }

    fn minus(&self, o: &Sums) -> Sums {
        Sums {
            n: self.n - o.n,
            u: self.u - o.u,
            uu: self.uu - o.uu,
            y: self.y - o.y,
            yy: self.yy - o.yy,
            uy: self.uy - o.uy,
        }
    }

    fn rss_constant(&self) -> f64 {
        (self.yy - self.y * self.y / self.n).max(0.0)
    }

    fn rss_line(&self) -> f64 {
        let suu = self.uu - self.u * self.u / self.n;
        let suy = self.uy - self.u * self.y / self.n;
        let syy = self.yy - self.y * self.y / self.n;
        if suu <= 0.0 {
            return syy.max(0.0);
        }
        (syy - suy * suy / suu).max(0.0)
    }
}

/// Step-times-linear threshold fit
/// `P(I) = P_floor + Θ(I - I_th)·(P_step + s·(I - I_th))`.
///
/// `I_th` is profiled over the sampled currents: for each candidate the
/// model is a constant below and a free line above, solved in closed form;
/// the candidate with the smallest residual wins. Parameters: `I_th` (A),
/// `P_step`, `P_floor` (`value`), `slope` (`value/A`).
pub fn fit_threshold(currents: &[f64], powers: &[f64]) -> Result<FitResult> {
    if currents.len() != powers.len() {
        return Err(Error::InvalidInput("currents and powers differ in length".into()));
    }
    if currents.iter().chain(powers).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite data".into()));
    }
    let n = currents.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!("{n} points, need at least 5")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| currents[a].total_cmp(&currents[b]));
    let i: Vec<f64> = idx.iter().map(|&k| currents[k]).collect();
    let p: Vec<f64> = idx.iter().map(|&k| powers[k]).collect();

    let i_mid = 0.5 * (i[0] + i[n - 1]);
    let i_scale = 0.5 * (i[n - 1] - i[0]);
    if i_scale == 0.0 {
        return Err(Error::DegenerateFit("all currents equal".into()));
    }
    let p_mid = p.iter().sum::<f64>() / n as f64;
    let p_scale = p.iter().map(|v| (v - p_mid).abs()).fold(0.0, f64::max);
    if p_scale == 0.0 {
        return Err(Error::NoThreshold("constant output".into()));
    }
    let u: Vec<f64> = i.iter().map(|x| (x - i_mid) / i_scale).collect();
    let y: Vec<f64> = p.iter().map(|x| (x - p_mid) / p_scale).collect();

    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = Sums::default();
    prefix.push(acc);
    for k in 0..n {
        acc.add(u[k], y[k]);
        prefix.push(acc);
    }
    let total = acc;
    let best = (2..=n - 2)
        .filter(|&k| i[k] > i[k - 1])
        .map(|k| {
            let below = prefix[k];
            let above = total.minus(&below);
            (k, below.rss_constant() + above.rss_line())
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::NoThreshold("no candidate with two points on each side".into()))?
        .0;

    // exact solve at the chosen split
    let above_i = &i[best..];
    let (below_p, above_p) = (&p[..best], &p[best..]);
    let i_th = i[best];
    let floor = below_p.iter().sum::<f64>() / below_p.len() as f64;
    let na = above_i.len() as f64;
    let dm = above_i.iter().map(|x| x - i_th).sum::<f64>() / na;
    let pm = above_p.iter().sum::<f64>() / na;
    let sdd: f64 = above_i.iter().map(|x| (x - i_th - dm).powi(2)).sum();
    let sdp: f64 = above_i
        .iter()
        .zip(above_p)
        .map(|(x, y)| (x - i_th - dm) * (y - pm))
        .sum();
    let slope = if sdd > 0.0 { sdp / sdd } else { 0.0 };
    let at_threshold = pm - slope * dm;
    let step = at_threshold - floor;

    let rss_below: f64 = below_p.iter().map(|y| (y - floor).powi(2)).sum();
    let rss_above: f64 = above_i
        .iter()
        .zip(above_p)
        .map(|(x, y)| (y - at_threshold - slope * (x - i_th)).powi(2))
        .sum();
    let rss = rss_below + rss_above;
    let residual_rms = (rss / n as f64).sqrt();

    let mut diffs: Vec<f64> = p
        .windows(2)
        .enumerate()
        .filter(|(k, _)| k + 1 != best)
        .map(|(_, w)| (w[1] - w[0]).abs())
        .collect();
    diffs.sort_by(f64::total_cmp);
    let typical_diff = diffs[diffs.len() / 2];
    let noise = residual_rms.max(typical_diff);
    if !(step.abs() >= 3.0 * noise) || step.abs() <= 1e-9 * p_scale {
        return Err(Error::NoThreshold(format!(
            "best step {step:e} is below three times the noise scale {noise:e}"
        )));
    }

    let dof = (n as f64 - 4.0).max(1.0);
    let sigma2 = rss / dof;
    let var_floor = sigma2 / below_p.len() as f64;
    let var_slope = if sdd > 0.0 { sigma2 / sdd } else { f64::INFINITY };
    let var_at = sigma2 / na + dm * dm * var_slope;
    let grid = i[best] - i[best - 1];
    let param = |name: &str, unit: &str, value: f64, var: f64| Param {
        name: name.into(),
        unit: unit.into(),
        value,
        stderr: var.sqrt(),
    };
    Ok(FitResult {
        params: vec![
            param("I_th", "A", i_th, grid * grid / 12.0),
            param("P_step", "value", step, var_at + var_floor),
            param("slope", "value/A", slope, var_slope),
            param("P_floor", "value", floor, var_floor),
        ],
        residual_rms,
        converged: true,
        iterations: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn model(i: f64, i_th: f64) -> f64 {
        if i >= i_th {
            416e-6 + 0.0418 * (i - i_th)
        } else {
            3.49e-6
        }
    }

    #[test]
    fn noiseless_recovery() {
        let i: Vec<f64> = (0..4000).map(|k| 22e-3 + 8e-3 * k as f64 / 3999.0).collect();
        let p: Vec<f64> = i.iter().map(|&x| model(x, 28.11e-3)).collect();
        let fit = fit_threshold(&i, &p).unwrap();
        let step = i[1] - i[0];
        let i_th = fit.value("I_th");
        assert!(i_th >= 28.11e-3 && i_th - 28.11e-3 <= step);
        assert!((fit.value("slope") - 0.0418).abs() < 1e-9);
        assert!(fit.residual_rms < 1e-10 * 416e-6);
    }

    #[test]
    fn shuffled_input() {
        let i: Vec<f64> = (0..500).map(|k| 22e-3 + 8e-3 * ((k * 7919) % 500) as f64 / 499.0).collect();
        let p: Vec<f64> = i.iter().map(|&x| model(x, 26e-3)).collect();
        let fit = fit_threshold(&i, &p).unwrap();
        assert!((fit.value("I_th") - 26e-3).abs() <= 8e-3 / 499.0);
    }

    #[test]
    fn noisy_recovery() {
        let noise = Normal::new(0.0, 0.01 * 416e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let i: Vec<f64> = (0..8000).map(|k| 22e-3 + 8e-3 * k as f64 / 7999.0).collect();
        let p: Vec<f64> = i.iter().map(|&x| model(x, 28.11e-3) + noise.sample(&mut rng)).collect();
        let fit = fit_threshold(&i, &p).unwrap();
        assert!((fit.value("I_th") - 28.11e-3).abs() < 0.05e-3);
    }

    #[test]
    fn linear_data_has_no_threshold() {
        let i: Vec<f64> = (0..300).map(|k| k as f64 * 1e-4).collect();
        let p: Vec<f64> = i.iter().map(|x| 1e-3 + 0.05 * x).collect();
        assert!(matches!(fit_threshold(&i, &p), Err(Error::NoThreshold(_))));
    }
}
