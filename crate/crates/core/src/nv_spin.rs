//! NV ground-state spin physics, six-level population dynamics and ODMR
//! lineshapes.
//!
//! Level labels follow the usual six-level picture: `|1>` is the `ms = 0`
//! ground sublevel, `|2>` the (degenerate) `ms = ±1` ground sublevels, `|3>`
//! and `|4>` their spin-conserving excited partners, `|5>` the upper singlet
//! and `|6>` the lower, metastable singlet that absorbs at 1042 nm.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use num_complex::Complex64;

use crate::constants::{GAMMA_E, ZERO_FIELD_SPLITTING};
use crate::error::{invalid, Error, Result};

const UNIT_NORM_TOL: f64 = 1e-12;

/// The four NV symmetry axes of diamond, ⟨111⟩ family.
pub fn diamond_111_axes() -> [Vector3<f64>; 4] {
    let s = 1.0 / 3f64.sqrt();
    [
        Vector3::new(s, s, s),
        Vector3::new(s, -s, -s),
        Vector3::new(-s, s, -s),
        Vector3::new(-s, -s, s),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    /// Zero-field splitting, Hz.
    pub d: f64,
    /// Strain parameter E, Hz. The observed zero-field splitting is 2E.
    pub e: f64,
    /// Gyromagnetic ratio, Hz/T.
    pub gamma_e: f64,
    /// Bias field in the lab frame, T.
    pub field: Vector3<f64>,
    pub orientations: [Vector3<f64>; 4],
}

impl Default for SpinSystem {
    fn default() -> Self {
        Self {
            d: ZERO_FIELD_SPLITTING,
            e: 0.0,
            gamma_e: GAMMA_E,
            field: Vector3::zeros(),
            orientations: diamond_111_axes(),
        }
    }
}

/// One pair of ground-state transitions for a single NV orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    pub orientation: usize,
    /// Lower transition frequency, Hz.
    pub lower: f64,
    /// Upper transition frequency, Hz.
    pub upper: f64,
}

impl SpinSystem {
    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return invalid(format!("D must be positive, got {}", self.d));
        }
        if !(self.e >= 0.0 && self.e.is_finite()) {
            return invalid(format!("E must be non-negative, got {}", self.e));
        }
        if !(self.gamma_e > 0.0 && self.gamma_e.is_finite()) {
            return invalid(format!("gamma_e must be positive, got {}", self.gamma_e));
        }
        if !self.field.iter().all(|b| b.is_finite()) {
            return invalid("bias field must be finite");
        }
        for (i, n) in self.orientations.iter().enumerate() {
            if (n.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return invalid(format!(
                    "orientation {i} is not a unit vector (|n| = {})",
                    n.norm()
                ));
            }
        }
        Ok(())
    }

    /// Ground-state Hamiltonian (Hz) in the local frame of orientation `idx`,
    /// basis ordered `ms = +1, 0, -1`.
    pub fn hamiltonian(&self, idx: usize) -> Matrix3<Complex64> {
        let (x, y, z) = local_frame(&self.orientations[idx]);
        let bx = self.gamma_e * self.field.dot(&x);
        let by = self.gamma_e * self.field.dot(&y);
        let bz = self.gamma_e * self.field.dot(&z);

        let c = |re: f64, im: f64| Complex64::new(re, im);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        // D Sz^2 + E (Sx^2 - Sy^2) + bz Sz + bx Sx + by Sy
        let off_plus = c(r * bx, -r * by);
        Matrix3::new(
            c(self.d + bz, 0.0),
            off_plus,
            c(self.e, 0.0),
            off_plus.conj(),
            c(0.0, 0.0),
            off_plus,
            c(self.e, 0.0),
            off_plus.conj(),
            c(self.d - bz, 0.0),
        )
    }
}

/// Local NV frame: `z` along the axis, `x` fixed by projecting the lab `z`
/// (or lab `x` for near-vertical axes) onto the transverse plane.
fn local_frame(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let z = axis.normalize();
    let reference = if z.z.abs() < 0.9 {
        Vector3::z()
    } else {
        Vector3::x()
    };
    let x = (reference - z * reference.dot(&z)).normalize();
    let y = z.cross(&x);
    (x, y, z)
}

/// Transition frequencies from the lowest eigenstate to the other two, per
/// orientation, in orientation order.
pub fn resonance_frequencies(sys: &SpinSystem) -> Result<Vec<Resonance>> {
    sys.validate()?;
    Ok((0..4)
        .map(|idx| {
            let eig = SymmetricEigen::new(sys.hamiltonian(idx));
            let mut levels: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            levels.sort_by(f64::total_cmp);
            Resonance {
                orientation: idx,
                lower: levels[1] - levels[0],
                upper: levels[2] - levels[0],
            }
        })
        .collect())
}

/// All eight transitions sorted by frequency, ties broken by orientation.
pub fn sorted_transitions(sys: &SpinSystem) -> Result<Vec<(f64, usize)>> {
    let mut all: Vec<(f64, usize)> = resonance_frequencies(sys)?
        .into_iter()
        .flat_map(|r| [(r.lower, r.orientation), (r.upper, r.orientation)])
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(all)
}

/// Six-level rate model. All rates in s^-1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateModel {
    pub k_rad: f64,
    pub k35: f64,
    pub k45: f64,
    pub k56: f64,
    pub k61: f64,
    pub k62: f64,
    pub w_pump: f64,
    pub w_mw: f64,
}

impl RateModel {
    /// Literature-typical room-temperature rates with the given pump rate.
    pub fn literature(w_pump: f64) -> Self {
        Self {
            k_rad: 6.5e7,
            k35: 1.1e7,
            k45: 8.0e7,
            k56: 1.0e9,
            k61: 4.8e6,
            k62: 1.6e6,
            w_pump,
            w_mw: 0.0,
        }
    }

    pub fn with_mw(self, w_mw: f64) -> Self {
        Self { w_mw, ..self }
    }

    fn rates(&self) -> [f64; 8] {
        [
            self.k_rad, self.k35, self.k45, self.k56, self.k61, self.k62, self.w_pump, self.w_mw,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates().iter().all(|r| *r >= 0.0 && r.is_finite()) {
            Ok(())
        } else {
            invalid(format!("rates must be finite and non-negative: {self:?}"))
        }
    }

    /// `k45 > k35` and `k61 > k62`, the orderings that make optical spin
    /// polarisation possible.
    pub fn is_physical(&self) -> bool {
        self.k45 > self.k35 && self.k61 > self.k62
    }

    pub fn max_rate(&self) -> f64 {
        self.rates().into_iter().fold(0.0, f64::max)
    }

    /// Generator `M` of `dp/dt = M p`.
    pub fn rate_matrix(&self) -> Matrix6<f64> {
        // (from, to, rate), zero-based levels
        let transitions = [
            (0, 2, self.w_pump),
            (1, 3, self.w_pump),
            (2, 0, self.k_rad),
            (3, 1, self.k_rad),
            (2, 4, self.k35),
            (3, 4, self.k45),
            (4, 5, self.k56),
            (5, 0, self.k61),
            (5, 1, self.k62),
            (0, 1, self.w_mw),
            (1, 0, self.w_mw),
        ];
        let mut m = Matrix6::zeros();
        for (from, to, rate) in transitions {
            m[(to, from)] += rate;
            m[(from, from)] -= rate;
        }
        m
    }
}

/// Occupation probabilities of levels `|1>..|6>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Populations {
    pub p: [f64; 6],
}

impl Populations {
    pub fn ground() -> Self {
        Self {
            p: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        }
    }

    /// Population of the absorbing singlet `|6>`.
    pub fn singlet(&self) -> f64 {
        self.p[5]
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::from_column_slice(&self.p)
    }
}

/// Steady state of the rate model.
///
/// With no optical pump nothing leaves the ground manifold; the ground
/// population is then split evenly between `|1>` and `|2>`.
pub fn steady_state(m: &RateModel) -> Result<Populations> {
    m.validate()?;
    if m.w_pump == 0.0 {
        return Ok(Populations {
            p: [0.5, 0.5, 0.0, 0.0, 0.0, 0.0],
        });
    }

    let generator = m.rate_matrix();
    let mut sv: Vec<f64> = generator.singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    let scale = sv[5];
    if sv[1] <= 1e-12 * scale {
        return Err(Error::DegenerateModel(format!(
            "rate matrix kernel is not one-dimensional (singular values {sv:?})"
        )));
    }

    let mut a = generator;
    for j in 0..6 {
        a[(5, j)] = 1.0;
    }
    let mut b = Vector6::zeros();
    b[5] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::DegenerateModel("normalised rate system is singular".into()))?;

    let mut p = [0.0; 6];
    for (dst, v) in p.iter_mut().zip(x.iter()) {
        // round-off can leave -1e-17 on empty levels
        *dst = v.max(0.0);
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(Populations { p })
}

/// Explicit fixed-step RK4 integration of `dp/dt = M p` from `p0` to `t_end`.
pub fn integrate_rk4(m: &RateModel, p0: &Populations, t_end: f64) -> Populations {
    let generator = m.rate_matrix();
    let stiffest = (0..6).map(|i| generator[(i, i)].abs()).fold(0.0, f64::max);
    let mut p = p0.as_vector();
    if stiffest == 0.0 || t_end <= 0.0 {
        return *p0;
    }
    // |h λ| <= 1 keeps RK4 well inside its stability region (Gershgorin bound 2·max|M_ii|)
    let h_max = 0.5 / stiffest;
    let steps = (t_end / h_max).ceil() as usize;
    let h = t_end / steps as f64;
    for _ in 0..steps {
        let k1 = generator * p;
        let k2 = generator * (p + k1 * (h / 2.0));
        let k3 = generator * (p + k2 * (h / 2.0));
        let k4 = generator * (p + k3 * h);
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    let mut out = [0.0; 6];
    out.copy_from_slice(p.as_slice());
    Populations { p: out }
}

/// Single-pass singlet absorbance `alpha = sigma · n_nv · p6 · L`.
///
/// `sigma` in cm², `n_nv` in cm^-3, `path_length` in cm.
pub fn singlet_absorption(
    p: &Populations,
    sigma: f64,
    n_nv: f64,
    path_length: f64,
) -> Result<f64> {
    if sigma < 0.0 || n_nv < 0.0 || path_length < 0.0 {
        return invalid("absorption inputs must be non-negative");
    }
    Ok(sigma * n_nv * p.singlet() * path_length)
}

/// Transmission `exp(-alpha)` for a single pass.
pub fn transmission(alpha: f64) -> f64 {
    (-alpha).exp()
}

/// Sum of Lorentzians sharing one width.
#[derive(Debug, Clone, PartialEq)]
pub struct Lineshape {
    /// Resonance centres, Hz.
    pub centers: Vec<f64>,
    /// Full width at half maximum, Hz.
    pub fwhm: f64,
    /// Per-resonance peak values (signed).
    pub amplitudes: Vec<f64>,
}

impl Lineshape {
    pub fn new(centers: Vec<f64>, fwhm: f64, amplitudes: Vec<f64>) -> Result<Self> {
        let shape = Self {
            centers,
            fwhm,
            amplitudes,
        };
        shape.validate()?;
        Ok(shape)
    }

    /// Zero-field doublet at `D ± E` with equal amplitudes.
    pub fn zero_field_doublet(d: f64, e: f64, fwhm: f64, amplitude: f64) -> Result<Self> {
        Self::new(vec![d - e, d + e], fwhm, vec![amplitude, amplitude])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm > 0.0 && self.fwhm.is_finite()) {
            return invalid(format!("fwhm must be positive, got {}", self.fwhm));
        }
        if self.centers.len() != self.amplitudes.len() {
            return invalid("lineshape needs one amplitude per centre");
        }
        if !self
            .centers
            .iter()
            .chain(&self.amplitudes)
            .all(|v| v.is_finite())
        {
            return invalid("lineshape centres and amplitudes must be finite");
        }
        Ok(())
    }

    /// Unchecked evaluation; call [`Lineshape::validate`] first.
    #[inline]
    pub fn eval(&self, f: f64) -> f64 {
        let hw2 = 0.25 * self.fwhm * self.fwhm;
        self.centers
            .iter()
            .zip(&self.amplitudes)
            .map(|(c, a)| {
                let d = f - c;
                a * hw2 / (d * d + hw2)
            })
            .sum()
    }

    /// Same lineshape with every amplitude multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            centers: self.centers.clone(),
            fwhm: self.fwhm,
            amplitudes: self.amplitudes.iter().map(|a| a * k).collect(),
        }
    }

    /// Same lineshape with every centre moved by `df`.
    pub fn shifted(&self, df: f64) -> Self {
        Self {
            centers: self.centers.iter().map(|c| c + df).collect(),
            fwhm: self.fwhm,
            amplitudes: self.amplitudes.clone(),
        }
    }
}

pub fn odmr_lineshape(f_mw: f64, shape: &Lineshape) -> Result<f64> {
    shape.validate()?;
    Ok(shape.eval(f_mw))
}

/// Inhomogeneous dephasing time `1/(π Δf)` of a Lorentzian line, s.
pub fn t2star_from_linewidth(fwhm: f64) -> Result<f64> {
    if !(fwhm > 0.0) {
        return invalid(format!("linewidth must be positive, got {fwhm}"));
    }
    Ok(1.0 / (std::f64::consts::PI * fwhm))
}

/// Incoherent microwave mixing rate at frequency `f_mw`: `peak_rate` times a
/// unit-height Lorentzian sum over `centers`.
pub fn mw_mixing_rate(f_mw: f64, centers: &[f64], fwhm: f64, peak_rate: f64) -> f64 {
    let hw2 = 0.25 * fwhm * fwhm;
    peak_rate
        * centers
            .iter()
            .map(|c| {
                let d = f_mw - c;
                hw2 / (d * d + hw2)
            })
            .sum::<f64>()
}
