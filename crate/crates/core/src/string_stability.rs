//! Head-to-tail transfer function of an LCC string and the frequency-domain
//! stability verdicts.
//!
//! A velocity perturbation travels one HDV hop by the local transfer
//! function phi(s)/gamma(s), with
//!
//! ```text
//! phi(s)   = alpha3*s + alpha1
//! gamma(s) = s^2 + alpha2*s + alpha1
//! ```
//!
//! The CAV splices its extra feedback into the chain through
//! H_i(s) = mu_i*(gamma/phi - 1) + k_i*s, one term per monitored vehicle,
//! which yields the head-to-tail transfer function
//!
//! ```text
//!            phi + sum_{i in P} H_i*(phi/gamma)^(i+1)    ( phi )^(n+m)
//! Gamma(s) = ------------------------------------------ * (-----)
//!            gamma - sum_{i in F} H_i*(phi/gamma)^i      (gamma)
//! ```
//!
//! Vehicles ahead carry negative indices, so the numerator exponent i+1 is
//! zero for the immediate predecessor (i = -1) and negative beyond it; the
//! i = -2 term multiplies by gamma/phi once.
//!
//! The string is string stable when |Gamma(j*omega)| < 1 for every
//! omega > 0. The DC limit is structurally Gamma(0) = 1 and is approached
//! from below by string-stable configurations, so the stable verdict
//! requires the squared-magnitude excess over 1 to stay strictly negative
//! on the probed range; the margin constant only separates marginal from
//! unstable.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::car_following::LinearGains;
use crate::controllability::{eigenvalues, CtrbError};
use crate::system_builder::{build, closed_loop, FeedbackGains, LccTopology, LccVariant};

/// Width of the marginal band on |Gamma(j*omega)|^2 - 1.
pub const STRING_STABILITY_MARGIN: f64 = 1e-6;

/// Band around zero for the real part of closed-loop eigenvalues inside
/// which the plant verdict is marginal.
pub const PLANT_STABILITY_EPS: f64 = 1e-8;

/// Relative threshold under which a transfer-function denominator counts
/// as a pole hit.
const POLE_REL_TOL: f64 = 1e-12;

/// Golden-section refinement stops once the bracket is this narrow in
/// ln(omega), i.e. 1e-6 relative in omega.
const REFINE_REL_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum StringStabilityError {
    #[error("free-driving topology has no head vehicle to measure against")]
    NoHeadVehicle,
    #[error("transfer function has a pole at s = {at}")]
    PoleAtEvaluationPoint { at: Complex64 },
    #[error("transfer function has a pole on the imaginary axis at omega = {omega}")]
    PoleOnImaginaryAxis { omega: f64 },
    #[error("invalid omega grid: {0}")]
    InvalidGrid(String),
    #[error("eigenvalue iteration failed to converge")]
    EigSolverFailure,
}

impl From<CtrbError> for StringStabilityError {
    fn from(e: CtrbError) -> Self {
        match e {
            CtrbError::EigSolverFailure => StringStabilityError::EigSolverFailure,
        }
    }
}

/// Log-spaced frequency grid for |Gamma(j*omega)| evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOmegaGrid")]
pub struct OmegaGrid {
    omega_min: f64,
    omega_max: f64,
    points: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOmegaGrid {
    #[serde(default = "default_omega_min")]
    omega_min: f64,
    #[serde(default = "default_omega_max")]
    omega_max: f64,
    #[serde(default = "default_points")]
    points: usize,
}

fn default_omega_min() -> f64 {
    1e-3
}

fn default_omega_max() -> f64 {
    1e2
}

fn default_points() -> usize {
    1000
}

impl TryFrom<RawOmegaGrid> for OmegaGrid {
    type Error = StringStabilityError;

    fn try_from(raw: RawOmegaGrid) -> Result<Self, Self::Error> {
        OmegaGrid::new(raw.omega_min, raw.omega_max, raw.points)
    }
}

impl Default for OmegaGrid {
    fn default() -> Self {
        OmegaGrid {
            omega_min: default_omega_min(),
            omega_max: default_omega_max(),
            points: default_points(),
        }
    }
}

impl OmegaGrid {
    pub fn new(omega_min: f64, omega_max: f64, points: usize) -> Result<Self, StringStabilityError> {
        if !(omega_min.is_finite() && omega_max.is_finite()) || omega_min <= 0.0 {
            return Err(StringStabilityError::InvalidGrid(format!(
                "omega bounds must be finite and positive, got [{omega_min}, {omega_max}]"
            )));
        }
        if omega_min >= omega_max {
            return Err(StringStabilityError::InvalidGrid(format!(
                "omega_min {omega_min} must be below omega_max {omega_max}"
            )));
        }
        if points < 2 {
            return Err(StringStabilityError::InvalidGrid(format!(
                "need at least 2 grid points, got {points}"
            )));
        }
        Ok(OmegaGrid {
            omega_min,
            omega_max,
            points,
        })
    }

    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// i-th grid frequency, log-spaced. Endpoints are returned exactly, the
    /// ln/exp round trip would perturb them by an ulp.
    pub fn sample(&self, i: usize) -> f64 {
        if i == 0 {
            return self.omega_min;
        }
        if i == self.points - 1 {
            return self.omega_max;
        }
        let t = i as f64 / (self.points - 1) as f64;
        let lg = self.omega_min.ln() * (1.0 - t) + self.omega_max.ln() * t;
        lg.exp()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + use<> {
        let grid = *self;
        (0..grid.points).map(move |i| grid.sample(i))
    }
}

/// Local HDV polynomials (phi(s), gamma(s)).
pub fn phi_gamma(gains: &LinearGains, s: Complex64) -> (Complex64, Complex64) {
    let phi = gains.alpha3() * s + gains.alpha1();
    let gamma = s * s + gains.alpha2() * s + gains.alpha1();
    (phi, gamma)
}

fn pole_error(s: Complex64) -> StringStabilityError {
    if s.re == 0.0 && s.im > 0.0 {
        StringStabilityError::PoleOnImaginaryAxis { omega: s.im }
    } else {
        StringStabilityError::PoleAtEvaluationPoint { at: s }
    }
}

/// Head-to-tail transfer function Gamma(s) for a topology with a head
/// vehicle. Pole hits are reported rather than returned as huge values so
/// grid scans stay meaningful near resonances.
pub fn gamma_head_to_tail(
    topology: &LccTopology,
    gains: &LinearGains,
    fb: &FeedbackGains,
    s: Complex64,
) -> Result<Complex64, StringStabilityError> {
    if !topology.has_head() {
        return Err(StringStabilityError::NoHeadVehicle);
    }
    let (phi, gamma) = phi_gamma(gains, s);
    let phi_scale = gains.alpha1() + gains.alpha3() * s.norm();
    let gamma_scale = s.norm_sqr() + gains.alpha2() * s.norm() + gains.alpha1();

    let active = |i: i32| fb.mu(i) != 0.0 || fb.k(i) != 0.0;
    // 1/phi appears inside H_i whenever mu_i != 0, and through the negative
    // numerator exponents for monitored vehicles beyond the immediate
    // predecessor.
    let needs_inv_phi = fb.indices().any(|i| fb.mu(i) != 0.0)
        || topology.preceding().any(|i| i + 1 < 0 && active(i));
    let needs_inv_gamma =
        topology.n() + topology.m() > 0 || topology.following().any(active);
    if needs_inv_phi && phi.norm() < POLE_REL_TOL * phi_scale {
        return Err(pole_error(s));
    }
    if needs_inv_gamma && gamma.norm() < POLE_REL_TOL * gamma_scale {
        return Err(pole_error(s));
    }

    let ratio = phi / gamma;
    let h = |i: i32| -> Complex64 {
        let mut v = fb.k(i) * s;
        if fb.mu(i) != 0.0 {
            v += fb.mu(i) * (gamma / phi - 1.0);
        }
        v
    };

    let mut num = phi;
    for i in topology.preceding() {
        if active(i) {
            num += h(i) * ratio.powi(i + 1);
        }
    }
    let mut den = gamma;
    let mut den_scale = gamma_scale;
    for i in topology.following() {
        if active(i) {
            let term = h(i) * ratio.powi(i);
            den -= term;
            den_scale += term.norm();
        }
    }
    if den.norm() < POLE_REL_TOL * den_scale {
        return Err(pole_error(s));
    }

    Ok(num / den * ratio.powi((topology.n() + topology.m()) as i32))
}

/// One grid sample of the head-to-tail transfer function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferEval {
    pub omega: f64,
    pub gamma_value: Complex64,
    pub magnitude_sq: f64,
}

/// Evaluate Gamma(j*omega) on every grid frequency.
pub fn evaluate_grid(
    topology: &LccTopology,
    gains: &LinearGains,
    fb: &FeedbackGains,
    grid: &OmegaGrid,
) -> Result<Vec<TransferEval>, StringStabilityError> {
    grid.iter()
        .map(|omega| {
            let value = gamma_head_to_tail(topology, gains, fb, Complex64::new(0.0, omega))?;
            Ok(TransferEval {
                omega,
                gamma_value: value,
                magnitude_sq: value.norm_sqr(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriState {
    Stable,
    Marginal,
    Unstable,
}

/// Combined frequency-domain and spectrum verdict for one gain vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub string_stable: TriState,
    /// Peak of |Gamma(j*omega)| over the refined grid; infinite when the
    /// evaluation hit a pole on the imaginary axis.
    pub peak_magnitude: f64,
    pub peak_omega: f64,
    pub plant_stable: TriState,
    /// Largest real part over the closed-loop spectrum, after excluding
    /// the structurally unregulated states of a free-driving CAV.
    pub max_real_eigenvalue: f64,
}

/// Plant-side half of the verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantAssessment {
    pub verdict: TriState,
    pub max_real_eigenvalue: f64,
}

/// Classify the closed-loop spectrum. The free-driving CAV's position
/// state is unregulated by construction and its zero eigenvalue is always
/// excluded; the CAV velocity state is excluded too when no feedback
/// touches it (its row is exactly zero), since its zero eigenvalue is
/// equally structural. An empty remaining spectrum reports -inf.
pub fn plant_verdict(
    topology: &LccTopology,
    gains: &LinearGains,
    fb: &FeedbackGains,
) -> Result<PlantAssessment, StringStabilityError> {
    let sys = build(topology, gains);
    let a_cl = closed_loop(&sys, fb).expect("gains validated by caller");
    let spectrum = if topology.variant() == LccVariant::FreeDriving {
        let dim = a_cl.nrows();
        let velocity_row_zero = (0..dim).all(|j| a_cl[(1, j)] == 0.0);
        let keep: Vec<usize> = (0..dim)
            .filter(|&i| i != 0 && (i != 1 || !velocity_row_zero))
            .collect();
        let reduced = a_cl.select_rows(keep.iter()).select_columns(keep.iter());
        if reduced.nrows() == 0 {
            Vec::new()
        } else {
            eigenvalues(&reduced)?
        }
    } else {
        eigenvalues(&a_cl)?
    };
    let max_re = spectrum
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let verdict = if max_re < -PLANT_STABILITY_EPS {
        TriState::Stable
    } else if max_re > PLANT_STABILITY_EPS {
        TriState::Unstable
    } else {
        TriState::Marginal
    };
    Ok(PlantAssessment {
        verdict,
        max_real_eigenvalue: max_re,
    })
}

/// |Gamma(j*omega)|^2 at a single frequency.
fn magnitude_sq_at(
    topology: &LccTopology,
    gains: &LinearGains,
    fb: &FeedbackGains,
    omega: f64,
) -> Result<f64, StringStabilityError> {
    Ok(gamma_head_to_tail(topology, gains, fb, Complex64::new(0.0, omega))?.norm_sqr())
}

/// Golden-section maximization of |Gamma|^2 over ln(omega) in [lo, hi].
fn refine_peak(
    topology: &LccTopology,
    gains: &LinearGains,
    fb: &FeedbackGains,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64), StringStabilityError> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = lo.ln();
    let mut b = hi.ln();
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = magnitude_sq_at(topology, gains, fb, c.exp())?;
    let mut fd = magnitude_sq_at(topology, gains, fb, d.exp())?;
    while b - a > REFINE_REL_TOL {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = magnitude_sq_at(topology, gains, fb, c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = magnitude_sq_at(topology, gains, fb, d.exp())?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((magnitude_sq_at(topology, gains, fb, t.exp())?, t.exp()))
}

/// Peak of |Gamma(j*omega)|^2 over the grid, with every local maximum
/// refined by golden section.
fn scan_peak(
    topology: &LccTopology,
    gains: &LinearGains,
    fb: &FeedbackGains,
    grid: &OmegaGrid,
) -> Result<(f64, f64), StringStabilityError> {
    let evals = evaluate_grid(topology, gains, fb, grid)?;
    let n = evals.len();
    let mut best = (f64::NEG_INFINITY, grid.omega_min());
    let consider = |cand: (f64, f64), best: &mut (f64, f64)| {
        if cand.0 > best.0 {
            *best = cand;
        }
    };
    for (i, e) in evals.iter().enumerate() {
        consider((e.magnitude_sq, e.omega), &mut best);
        let left_ok = i == 0 || evals[i - 1].magnitude_sq <= e.magnitude_sq;
        let right_ok = i == n - 1 || evals[i + 1].magnitude_sq <= e.magnitude_sq;
        if left_ok && right_ok {
            let lo = if i == 0 { e.omega } else { evals[i - 1].omega };
            let hi = if i == n - 1 { e.omega } else { evals[i + 1].omega };
            if hi > lo {
                consider(refine_peak(topology, gains, fb, lo, hi)?, &mut best);
            }
        }
    }
    Ok(best)
}

fn worse(a: TriState, b: TriState) -> TriState {
    a.max(b)
}

/// Full verdict for one topology and feedback-gain vector: peak search on
/// the frequency grid plus the closed-loop spectrum check. A pole landing
/// on the imaginary axis makes the string verdict unstable and degrades
/// the plant verdict to at least marginal.
pub fn string_stability_verdict(
    topology: &LccTopology,
    gains: &LinearGains,
    fb: &FeedbackGains,
    grid: &OmegaGrid,
) -> Result<StabilityVerdict, StringStabilityError> {
    if !topology.has_head() {
        return Err(StringStabilityError::NoHeadVehicle);
    }
    let plant = plant_verdict(topology, gains, fb)?;
    match scan_peak(topology, gains, fb, grid) {
        Ok((peak_sq, peak_omega)) => {
            let excess = peak_sq - 1.0;
            let string_stable = if excess < 0.0 {
                TriState::Stable
            } else if excess <= STRING_STABILITY_MARGIN {
                TriState::Marginal
            } else {
                TriState::Unstable
            };
            Ok(StabilityVerdict {
                string_stable,
                peak_magnitude: peak_sq.sqrt(),
                peak_omega,
                plant_stable: plant.verdict,
                max_real_eigenvalue: plant.max_real_eigenvalue,
            })
        }
        Err(StringStabilityError::PoleOnImaginaryAxis { omega }) => Ok(StabilityVerdict {
            string_stable: TriState::Unstable,
            peak_magnitude: f64::INFINITY,
            peak_omega: omega,
            plant_stable: worse(plant.verdict, TriState::Marginal),
            max_real_eigenvalue: plant.max_real_eigenvalue,
        }),
        Err(e) => Err(e),
    }
}

/// Frequency response output_row -> input through the resolvent:
/// e_out^T (j*omega*I - A)^{-1} input. Independent of the transfer-function
/// algebra above, which makes it a cross-check oracle.
pub fn frequency_response(
    a: &DMatrix<f64>,
    input: &DVector<f64>,
    output_row: usize,
    omega: f64,
) -> Result<Complex64, StringStabilityError> {
    let dim = a.nrows();
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = Complex64::new(-a[(i, j)], 0.0);
        }
        m[(i, i)] += Complex64::new(0.0, omega);
    }
    let rhs = DVector::from_iterator(dim, input.iter().map(|&v| Complex64::new(v, 0.0)));
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or(StringStabilityError::PoleOnImaginaryAxis { omega })?;
    Ok(x[output_row])
}
