//! Controllability analysis of the assembled string dynamics.
//!
//! Two complementary numerical routes are kept deliberately separate. The
//! Kalman route builds `[B, AB, ..., A^(N-1)B]` and counts singular values;
//! powers of `A` square its condition number, so the answer is trusted only
//! up to moderate state dimensions. The PBH route checks
//! `sigma_min([lambda I - A, B])` at every eigenvalue of `A` and stays
//! well-conditioned, which makes it the preferred test for larger strings.
//! The overall verdict is tri-state; disagreement between the two routes is
//! reported as `Marginal` rather than papered over.
//!
//! A scalar condition summarizes when the string dynamics remain
//! controllable regardless of size: `alpha1 - alpha2 alpha3 + alpha3^2 != 0`
//! (a sufficient condition, not a necessary one). Its boundary is reported,
//! never asserted.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::car_following::LinearGains;
use crate::system_builder::StateSpace;

#[derive(Debug, Clone, Error)]
pub enum CtrbError {
    #[error("eigenvalue iteration failed to converge")]
    EigSolverFailure,
}

/// Default relative threshold for rank and margin decisions.
pub const DEFAULT_CTRB_TOL: f64 = 1e-9;

/// Computed eigenvalues closer than this are treated as one.
pub const EIGENVALUE_CLUSTER_TOL: f64 = 1e-6;

/// Kalman ranks are only trusted up to this state dimension.
pub const KALMAN_TRUST_DIM: usize = 12;

/// `alpha1 - alpha2 alpha3 + alpha3^2`; nonzero guarantees the CAV can
/// steer every vehicle state behind it, for any string length.
pub fn controllability_condition(gains: &LinearGains) -> f64 {
    gains.alpha1() - gains.alpha2() * gains.alpha3() + gains.alpha3() * gains.alpha3()
}

/// `[B, AB, ..., A^(N-1)B]`.
pub fn kalman_matrix(a: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut k = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        k.set_column(j, &col);
        col = a * col;
    }
    k
}

/// Numerical rank of the Kalman matrix: singular values above
/// `tol * sigma_max` count.
pub fn kalman_rank(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> usize {
    let sv = kalman_matrix(a, b).singular_values();
    let sigma_max = sv.iter().copied().fold(0.0_f64, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * sigma_max).count()
}

/// Rows of the Kalman matrix that stay identically zero: states the input
/// can never reach. The block band keeps vehicles ahead of the CAV outside
/// the input's influence, so their rows are exact zeros.
pub fn uncontrollable_rows(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Vec<usize> {
    let k = kalman_matrix(a, b);
    let scale = k.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);
    (0..k.nrows())
        .filter(|&i| k.row(i).iter().all(|v| v.abs() <= tol * scale))
        .collect()
}

/// Smallest singular value of `[lambda I - A, B]`.
pub fn pbh_sigma_min(a: &DMatrix<f64>, b: &DVector<f64>, lambda: Complex64) -> f64 {
    let n = a.nrows();
    let mut m = DMatrix::<Complex64>::zeros(n, n + 1);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = Complex64::new(-a[(i, j)], 0.0);
        }
        m[(i, i)] += lambda;
        m[(i, n)] = Complex64::new(b[i], 0.0);
    }
    m.singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PbhEntry {
    pub eigenvalue: Complex64,
    pub sigma_min: f64,
}

/// PBH rank margins at every distinct eigenvalue of `A`.
///
/// Close eigenvalues are clustered first; repeated poles of the coupled
/// chain are defective and smear under finite precision, and probing each
/// smeared copy separately costs nothing but keeps the worst margin honest.
pub fn pbh_test(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Vec<PbhEntry>, CtrbError> {
    let eigs = eigenvalues(a)?;
    let clusters = cluster(&eigs, EIGENVALUE_CLUSTER_TOL);
    Ok(clusters
        .into_iter()
        .map(|lambda| PbhEntry {
            eigenvalue: lambda,
            sigma_min: pbh_sigma_min(a, b, lambda),
        })
        .collect())
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>, CtrbError> {
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or(CtrbError::EigSolverFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

fn cluster(eigs: &[Complex64], tol: f64) -> Vec<Complex64> {
    let mut reps: Vec<(Complex64, usize)> = Vec::new();
    for &e in eigs {
        match reps
            .iter_mut()
            .find(|(rep, count)| (*rep / *count as f64 - e).norm() <= tol)
        {
            Some((rep, count)) => {
                *rep += e;
                *count += 1;
            }
            None => reps.push((e, 1)),
        }
    }
    reps.into_iter().map(|(sum, c)| sum / c as f64).collect()
}

/// Largest singular value of `A`, the scale for margin thresholds.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllabilityVerdict {
    Controllable,
    Uncontrollable,
    Marginal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllabilityReport {
    pub condition_value: f64,
    pub state_dim: usize,
    pub kalman_rank: usize,
    pub pbh: Vec<PbhEntry>,
    /// State rows the input can never reach, by position in the ordering.
    pub uncontrollable_state_rows: Vec<usize>,
    pub min_pbh_margin: f64,
    pub matrix_norm: f64,
    pub tolerance: f64,
    pub verdict: ControllabilityVerdict,
}

/// Run both controllability routes on an assembled system.
pub fn analyze(sys: &StateSpace, tol: f64) -> Result<ControllabilityReport, CtrbError> {
    let a = sys.a();
    let b = sys.b();
    let state_dim = sys.dim();
    let kalman_rank = kalman_rank(a, b, tol);
    let pbh = pbh_test(a, b)?;
    let min_pbh_margin = pbh
        .iter()
        .map(|e| e.sigma_min)
        .fold(f64::INFINITY, f64::min);
    let matrix_norm = spectral_norm(a);
    let threshold = tol * matrix_norm;

    let kalman_full = kalman_rank == state_dim;
    let pbh_ok = min_pbh_margin > 10.0 * threshold;
    let pbh_bad = min_pbh_margin < 0.1 * threshold;
    let verdict = if state_dim <= KALMAN_TRUST_DIM {
        match (kalman_full, pbh_ok, pbh_bad) {
            (true, true, _) => ControllabilityVerdict::Controllable,
            (false, _, true) => ControllabilityVerdict::Uncontrollable,
            // Routes disagree or sit inside the threshold band.
            _ => ControllabilityVerdict::Marginal,
        }
    } else if pbh_ok {
        ControllabilityVerdict::Controllable
    } else if pbh_bad {
        ControllabilityVerdict::Uncontrollable
    } else {
        ControllabilityVerdict::Marginal
    };

    Ok(ControllabilityReport {
        condition_value: controllability_condition(sys.gains()),
        state_dim,
        kalman_rank,
        pbh,
        uncontrollable_state_rows: uncontrollable_rows(a, b, tol),
        min_pbh_margin,
        matrix_norm,
        tolerance: tol,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system_builder::{build_cf_lcc, build_fd_lcc, build_general};
    use approx::assert_relative_eq;

    fn typical_gains() -> LinearGains {
        LinearGains::new(0.3 * std::f64::consts::PI, 1.5, 0.9).unwrap()
    }

    /// Gains sitting exactly on the condition boundary:
    /// alpha1 = alpha2 alpha3 - alpha3^2.
    fn boundary_gains() -> LinearGains {
        LinearGains::new(1.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn condition_value_matches_hand_computation() {
        let c = controllability_condition(&typical_gains());
        assert_relative_eq!(c, 0.3 * std::f64::consts::PI - 0.54, max_relative = 1e-12);
        // Rounded presentation value, as a sanity anchor.
        assert!((c - 0.4025).abs() < 5e-5);
        assert_eq!(controllability_condition(&boundary_gains()), 0.0);
    }

    #[test]
    fn kalman_rank_of_the_solo_cav_is_full() {
        // S1 alone is a double integrator driven directly by the input.
        let sys = build_fd_lcc(0, &typical_gains());
        assert_eq!(kalman_rank(sys.a(), sys.b(), DEFAULT_CTRB_TOL), 2);
    }

    #[test]
    fn kalman_rank_is_full_for_free_driving_strings() {
        let sys = build_fd_lcc(2, &typical_gains());
        assert_eq!(kalman_rank(sys.a(), sys.b(), DEFAULT_CTRB_TOL), 6);
    }

    #[test]
    fn kalman_rank_drops_by_the_states_ahead() {
        let sys = build_general(1, 1, &typical_gains()).unwrap();
        assert_eq!(kalman_rank(sys.a(), sys.b(), DEFAULT_CTRB_TOL), 4);
    }

    #[test]
    fn unreachable_rows_are_exactly_the_vehicles_ahead() {
        for (n, m) in [(1usize, 1usize), (2, 2), (3, 1), (1, 3)] {
            let sys = build_general(n, m, &typical_gains()).unwrap();
            let rows = uncontrollable_rows(sys.a(), sys.b(), DEFAULT_CTRB_TOL);
            let expected: Vec<usize> = (0..2 * m).collect();
            assert_eq!(rows, expected, "n={n} m={m}");
        }
        for sys in [
            build_cf_lcc(3, &typical_gains()),
            build_fd_lcc(3, &typical_gains()),
        ] {
            assert!(uncontrollable_rows(sys.a(), sys.b(), DEFAULT_CTRB_TOL).is_empty());
        }
    }

    #[test]
    fn pbh_margins_clear_the_threshold_for_free_driving_strings() {
        for n in 1..=5 {
            let sys = build_fd_lcc(n, &typical_gains());
            let entries = pbh_test(sys.a(), sys.b()).unwrap();
            let norm = spectral_norm(sys.a());
            for e in &entries {
                assert!(
                    e.sigma_min > 1e-6 * norm,
                    "n={n}: margin {:e} at {}",
                    e.sigma_min,
                    e.eigenvalue
                );
            }
        }
    }

    #[test]
    fn pbh_detects_the_condition_boundary() {
        let g = boundary_gains();
        let sys = build_fd_lcc(2, &g);
        // The pole pair collapses to lambda = -1 where alpha3 lambda +
        // alpha1 = 0, so the rank test must fail there.
        let at_root = pbh_sigma_min(sys.a(), sys.b(), Complex64::new(-1.0, 0.0));
        assert!(at_root < 1e-10, "sigma_min at the analytic root: {at_root:e}");
        let entries = pbh_test(sys.a(), sys.b()).unwrap();
        let min = entries
            .iter()
            .map(|e| e.sigma_min)
            .fold(f64::INFINITY, f64::min);
        assert!(min < 1e-8, "worst computed-eigenvalue margin: {min:e}");
    }

    #[test]
    fn pbh_flags_the_human_poles_of_the_subsystem_ahead() {
        let sys = build_general(2, 2, &typical_gains()).unwrap();
        let entries = pbh_test(sys.a(), sys.b()).unwrap();
        let norm = spectral_norm(sys.a());
        let min = entries
            .iter()
            .map(|e| e.sigma_min)
            .fold(f64::INFINITY, f64::min);
        assert!(min < 1e-8 * norm, "expected a rank drop, worst margin {min:e}");
    }

    #[test]
    fn analyze_reaches_the_expected_verdicts() {
        let fd = build_fd_lcc(3, &typical_gains());
        let report = analyze(&fd, DEFAULT_CTRB_TOL).unwrap();
        assert_eq!(report.verdict, ControllabilityVerdict::Controllable);
        assert_eq!(report.kalman_rank, 8);
        assert!(report.uncontrollable_state_rows.is_empty());

        let general = build_general(2, 2, &typical_gains()).unwrap();
        let report = analyze(&general, DEFAULT_CTRB_TOL).unwrap();
        assert_eq!(report.verdict, ControllabilityVerdict::Uncontrollable);
        assert_eq!(report.uncontrollable_state_rows, vec![0, 1, 2, 3]);
        assert_eq!(report.kalman_rank, 6);

        let boundary = build_fd_lcc(2, &boundary_gains());
        let report = analyze(&boundary, DEFAULT_CTRB_TOL).unwrap();
        assert_ne!(report.verdict, ControllabilityVerdict::Controllable);
    }

    #[test]
    fn input_scaling_does_not_change_verdicts() {
        let sys = build_fd_lcc(3, &typical_gains());
        let base = analyze(&sys, DEFAULT_CTRB_TOL).unwrap().verdict;
        for c in [1e-2, 0.5, 10.0, 1e2] {
            let b = sys.b() * c;
            let rank = kalman_rank(sys.a(), &b, DEFAULT_CTRB_TOL);
            assert_eq!(rank, sys.dim());
            let entries = pbh_test(sys.a(), &b).unwrap();
            let min = entries
                .iter()
                .map(|e| e.sigma_min)
                .fold(f64::INFINITY, f64::min);
            let controllable = min > 10.0 * DEFAULT_CTRB_TOL * spectral_norm(sys.a());
            assert_eq!(
                controllable,
                base == ControllabilityVerdict::Controllable,
                "scale {c}"
            );
        }
    }
}
