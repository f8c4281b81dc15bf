//! Optimal velocity car-following model and its linearization.
//!
//! A human-driven vehicle adjusts its acceleration from the spacing `s` to
//! its predecessor, the spacing rate `s_dot` and its own velocity `v`:
//!
//! ```text
//! v' = F(s, s_dot, v) = alpha * (V(s) - v) + beta * s_dot
//! ```
//!
//! where `V(s)` is the spacing-dependent desired velocity, zero up to the
//! standstill spacing `s_st`, saturating at `v_max` beyond the free-flow
//! spacing `s_go`, and a half-cosine ramp in between:
//!
//! ```text
//!          { 0                                                s <= s_st
//! V(s) =   { v_max / 2 * (1 - cos(pi (s - s_st)/(s_go - s_st)))   s_st < s < s_go
//!          { v_max                                            s >= s_go
//! ```
//!
//! Around an equilibrium `(s*, v*)` with `v* = V(s*)` the model linearizes
//! to first-order coefficients
//!
//! ```text
//! alpha1 = alpha * V'(s*),   alpha2 = alpha + beta,   alpha3 = beta,
//! ```
//!
//! which drive every downstream analysis in this crate. All quantities are
//! SI: metres, seconds, metres per second.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum CarFollowingError {
    /// No spacing can sustain the requested equilibrium velocity.
    #[error("equilibrium velocity {v_star} is outside the attainable open range (0, {v_max})")]
    EquilibriumOutOfRange { v_star: f64, v_max: f64 },
    /// The desired-velocity slope vanishes, so spacing feedback disappears.
    #[error("desired-velocity slope vanishes at spacing {s_star}; the linearization is degenerate")]
    DegenerateEquilibrium { s_star: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

/// Parameters of one human driver. Invariants: `alpha > 0`, `beta > 0`,
/// `v_max > 0`, `0 <= s_st < s_go`, all finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDriverParams")]
pub struct DriverParams {
    alpha: f64,
    beta: f64,
    v_max: f64,
    s_st: f64,
    s_go: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDriverParams {
    alpha: f64,
    beta: f64,
    v_max: f64,
    s_st: f64,
    s_go: f64,
}

impl TryFrom<RawDriverParams> for DriverParams {
    type Error = CarFollowingError;

    fn try_from(r: RawDriverParams) -> Result<Self, Self::Error> {
        DriverParams::new(r.alpha, r.beta, r.v_max, r.s_st, r.s_go)
    }
}

impl DriverParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        v_max: f64,
        s_st: f64,
        s_go: f64,
    ) -> Result<Self, CarFollowingError> {
        let check = |name: &str, value: f64| {
            if value.is_finite() {
                Ok(())
            } else {
                Err(CarFollowingError::InvalidParams(format!(
                    "{name} must be finite, got {value}"
                )))
            }
        };
        check("alpha", alpha)?;
        check("beta", beta)?;
        check("v_max", v_max)?;
        check("s_st", s_st)?;
        check("s_go", s_go)?;
        if alpha <= 0.0 {
            return Err(CarFollowingError::InvalidParams(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if beta <= 0.0 {
            return Err(CarFollowingError::InvalidParams(format!(
                "beta must be positive, got {beta}"
            )));
        }
        if v_max <= 0.0 {
            return Err(CarFollowingError::InvalidParams(format!(
                "v_max must be positive, got {v_max}"
            )));
        }
        if s_st < 0.0 {
            return Err(CarFollowingError::InvalidParams(format!(
                "s_st must be non-negative, got {s_st}"
            )));
        }
        if s_go <= s_st {
            return Err(CarFollowingError::InvalidParams(format!(
                "s_go must exceed s_st, got s_go = {s_go} with s_st = {s_st}"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            v_max,
            s_st,
            s_go,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn s_st(&self) -> f64 {
        self.s_st
    }

    pub fn s_go(&self) -> f64 {
        self.s_go
    }
}

impl Default for DriverParams {
    /// A typical urban setup whose uncontrolled car-following behaviour is
    /// locally string unstable, which is what makes it interesting to
    /// analyse: `alpha = 0.6`, `beta = 0.9`, `v_max = 30`, `s_st = 5`,
    /// `s_go = 35`.
    fn default() -> Self {
        Self::new(0.6, 0.9, 30.0, 5.0, 35.0).expect("default parameters are valid")
    }
}

/// Spacing-dependent desired velocity `V(s)`.
pub fn desired_velocity(params: &DriverParams, s: f64) -> f64 {
    if s <= params.s_st {
        0.0
    } else if s >= params.s_go {
        params.v_max
    } else {
        let theta = std::f64::consts::PI * (s - params.s_st) / (params.s_go - params.s_st);
        params.v_max / 2.0 * (1.0 - theta.cos())
    }
}

/// Slope `V'(s)`; zero outside the ramp, where the driver no longer reacts
/// to spacing changes.
pub fn desired_velocity_slope(params: &DriverParams, s: f64) -> f64 {
    if s <= params.s_st || s >= params.s_go {
        0.0
    } else {
        let span = params.s_go - params.s_st;
        let theta = std::f64::consts::PI * (s - params.s_st) / span;
        params.v_max / 2.0 * std::f64::consts::PI / span * theta.sin()
    }
}

/// Acceleration response `F(s, s_dot, v)` of one human-driven vehicle.
pub fn ovm_acceleration(params: &DriverParams, s: f64, s_dot: f64, v: f64) -> f64 {
    params.alpha * (desired_velocity(params, s) - v) + params.beta * s_dot
}

/// An equilibrium flow state: every vehicle holds spacing `s_star` at
/// velocity `v_star = V(s_star)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    s_star: f64,
    v_star: f64,
}

impl Equilibrium {
    pub fn s_star(&self) -> f64 {
        self.s_star
    }

    pub fn v_star(&self) -> f64 {
        self.v_star
    }
}

/// Invert `V` on its ramp to find the spacing that sustains `v_star`.
///
/// The inversion is closed-form on the cosine ramp, so the returned state
/// satisfies `|V(s*) - v*| <= 1e-10 * v_max`.
pub fn solve_equilibrium(
    params: &DriverParams,
    v_star: f64,
) -> Result<Equilibrium, CarFollowingError> {
    let s_star = params.equilibrium_spacing(v_star)?;
    Ok(Equilibrium { s_star, v_star })
}

/// Equilibrium fixed by spacing instead of velocity.
pub fn equilibrium_from_spacing(params: &DriverParams, s_star: f64) -> Equilibrium {
    Equilibrium {
        s_star,
        v_star: desired_velocity(params, s_star),
    }
}

/// First-order coefficients of the model around an equilibrium.
/// Invariants: `alpha1 > 0` and `alpha2 > alpha3 > 0`, which hold for any
/// non-degenerate OVM equilibrium since `alpha, beta > 0` and `V'(s*) > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLinearGains")]
pub struct LinearGains {
    alpha1: f64,
    alpha2: f64,
    alpha3: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinearGains {
    alpha1: f64,
    alpha2: f64,
    alpha3: f64,
}

impl TryFrom<RawLinearGains> for LinearGains {
    type Error = CarFollowingError;

    fn try_from(r: RawLinearGains) -> Result<Self, Self::Error> {
        LinearGains::new(r.alpha1, r.alpha2, r.alpha3)
    }
}

impl LinearGains {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Result<Self, CarFollowingError> {
        if !(alpha1.is_finite() && alpha2.is_finite() && alpha3.is_finite()) {
            return Err(CarFollowingError::InvalidParams(format!(
                "linear coefficients must be finite, got ({alpha1}, {alpha2}, {alpha3})"
            )));
        }
        if alpha1 <= 0.0 {
            return Err(CarFollowingError::InvalidParams(format!(
                "alpha1 must be positive, got {alpha1}"
            )));
        }
        if alpha3 <= 0.0 || alpha2 <= alpha3 {
            return Err(CarFollowingError::InvalidParams(format!(
                "driving realism requires alpha2 > alpha3 > 0, got alpha2 = {alpha2}, alpha3 = {alpha3}"
            )));
        }
        Ok(Self {
            alpha1,
            alpha2,
            alpha3,
        })
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    pub fn alpha3(&self) -> f64 {
        self.alpha3
    }
}

/// Analytic linearization of the OVM at an equilibrium.
pub fn linearize(
    params: &DriverParams,
    eq: &Equilibrium,
) -> Result<LinearGains, CarFollowingError> {
    params.linear_gains(eq)
}

/// A car-following law that downstream analyses can linearize.
///
/// Only the OVM ships, as [`DriverParams`]; the default methods solve the
/// equilibrium by bisection and linearize by central differences, so a new
/// model only has to provide its acceleration response.
pub trait CarFollowingModel {
    /// Acceleration response to spacing, spacing rate and own velocity.
    fn acceleration(&self, s: f64, s_dot: f64, v: f64) -> f64;

    /// Spacing interval on which the acceleration responds to spacing.
    fn spacing_range(&self) -> (f64, f64);

    fn equilibrium_spacing(&self, v_star: f64) -> Result<f64, CarFollowingError> {
        let (mut lo, mut hi) = self.spacing_range();
        // F(s, 0, v*) must bracket zero; it is nondecreasing in s.
        if self.acceleration(lo, 0.0, v_star) > 0.0 || self.acceleration(hi, 0.0, v_star) < 0.0 {
            return Err(CarFollowingError::EquilibriumOutOfRange {
                v_star,
                v_max: v_star + self.acceleration(hi, 0.0, v_star).abs(),
            });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.acceleration(mid, 0.0, v_star) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn linear_gains(&self, eq: &Equilibrium) -> Result<LinearGains, CarFollowingError> {
        let (s, v) = (eq.s_star(), eq.v_star());
        let hs = 1e-4 * s.abs().max(1.0);
        let hv = 1e-4 * v.abs().max(1.0);
        let alpha1 =
            (self.acceleration(s + hs, 0.0, v) - self.acceleration(s - hs, 0.0, v)) / (2.0 * hs);
        let alpha3 =
            (self.acceleration(s, hv, v) - self.acceleration(s, -hv, v)) / (2.0 * hv);
        let dv = (self.acceleration(s, 0.0, v + hv) - self.acceleration(s, 0.0, v - hv))
            / (2.0 * hv);
        if alpha1 <= 0.0 {
            return Err(CarFollowingError::DegenerateEquilibrium { s_star: s });
        }
        LinearGains::new(alpha1, alpha3 - dv, alpha3)
    }
}

impl CarFollowingModel for DriverParams {
    fn acceleration(&self, s: f64, s_dot: f64, v: f64) -> f64 {
        ovm_acceleration(self, s, s_dot, v)
    }

    fn spacing_range(&self) -> (f64, f64) {
        (self.s_st, self.s_go)
    }

    /// Closed-form inversion of the cosine ramp.
    fn equilibrium_spacing(&self, v_star: f64) -> Result<f64, CarFollowingError> {
        if !v_star.is_finite() || v_star <= 0.0 || v_star >= self.v_max {
            return Err(CarFollowingError::EquilibriumOutOfRange {
                v_star,
                v_max: self.v_max,
            });
        }
        let theta = (1.0 - 2.0 * v_star / self.v_max).acos();
        Ok(self.s_st + theta / std::f64::consts::PI * (self.s_go - self.s_st))
    }

    fn linear_gains(&self, eq: &Equilibrium) -> Result<LinearGains, CarFollowingError> {
        let slope = desired_velocity_slope(self, eq.s_star());
        if slope <= 0.0 {
            return Err(CarFollowingError::DegenerateEquilibrium {
                s_star: eq.s_star(),
            });
        }
        LinearGains::new(self.alpha * slope, self.alpha + self.beta, self.beta)
    }
}
