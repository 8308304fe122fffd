//! Damped least squares with numeric Jacobians.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when `|δp| <= step_tolerance · (|p| + step_tolerance)`.
    pub step_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Jacobian of the residuals at `params`.
    pub jacobian: DMatrix<f64>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn residuals<F: Fn(&[f64], &mut [f64])>(f: &F, p: &[f64], m: usize) -> DVector<f64> {
    let mut r = DVector::zeros(m);
    f(p, r.as_mut_slice());
    r
}

fn jacobian<F: Fn(&[f64], &mut [f64])>(f: &F, p: &[f64], m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(m, p.len());
    let mut q = p.to_vec();
    let mut plus = vec![0.0; m];
    let mut minus = vec![0.0; m];
    for k in 0..p.len() {
        let h = 1e-6 * (1.0 + p[k].abs());
        q[k] = p[k] + h;
        f(&q, &mut plus);
        q[k] = p[k] - h;
        f(&q, &mut minus);
        q[k] = p[k];
        let inv = 0.5 / h;
        for i in 0..m {
            j[(i, k)] = (plus[i] - minus[i]) * inv;
        }
    }
    j
}

/// Minimises `Σ r_i(p)²` where `residual(p, r)` fills `r` (length `m`).
/// Parameters should be of order one; callers normalise.
pub fn levenberg_marquardt<F: Fn(&[f64], &mut [f64])>(
    residual: F,
    p0: &[f64],
    m: usize,
    opts: LmOptions,
) -> LmOutcome {
    let n = p0.len();
    let mut p = DVector::from_column_slice(p0);
    let mut r = residuals(&residual, p.as_slice(), m);
    let mut rss = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut j = jacobian(&residual, p.as_slice(), m);

    while iterations < opts.max_iterations {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        if g.amax() == 0.0 {
            converged = true;
            break;
        }
        let mut a = jtj.clone();
        for k in 0..n {
            a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
        }
        let step = match a.cholesky() {
            Some(ch) => -ch.solve(&g),
            None => {
                lambda *= 10.0;
                continue;
            }
        };
        let candidate = &p + &step;
        let r_new = residuals(&residual, candidate.as_slice(), m);
        let rss_new = r_new.norm_squared();
        let small = step.norm() <= opts.step_tolerance * (p.norm() + opts.step_tolerance);
        if rss_new.is_finite() && rss_new <= rss {
            p = candidate;
            r = r_new;
            rss = rss_new;
            lambda = (lambda / 3.0).max(1e-15);
            if small {
                converged = true;
                break;
            }
            j = jacobian(&residual, p.as_slice(), m);
        } else {
            if small {
                converged = true;
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
    }
    let jacobian = jacobian(&residual, p.as_slice(), m);
    LmOutcome {
        params: p.as_slice().to_vec(),
        jacobian,
        rss,
        converged,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let out = levenberg_marquardt(
            |p, r| {
                r[0] = 10.0 * (p[1] - p[0] * p[0]);
                r[1] = 1.0 - p[0];
            },
            &[-1.2, 1.0],
            2,
            LmOptions::default(),
        );
        assert!(out.converged);
        assert!((out.params[0] - 1.0).abs() < 1e-8 && (out.params[1] - 1.0).abs() < 1e-8);
        assert!(out.iterations <= 200);
    }

    #[test]
    fn iteration_cap() {
        let out = levenberg_marquardt(
            |p, r| {
                r[0] = 10.0 * (p[1] - p[0] * p[0]);
                r[1] = 1.0 - p[0];
            },
            &[-1.2, 1.0],
            2,
            LmOptions {
                max_iterations: 2,
                ..Default::default()
            },
        );
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }
}
