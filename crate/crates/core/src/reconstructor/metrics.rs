use serde::{Deserialize, Serialize};

use super::ReconstructionResult;
use crate::model::{exact_coefficients, transition_params_from_spec, CMatrix, SignalCoefficients, SystemSpec, TransitionParams, C64};
use crate::error::Result;

/// Floor on `‖Γ‖` in the relative damping error.
pub const GAMMA_NORM_FLOOR: f64 = 1e-12;

/// Relative errors of one reconstruction against the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub eps_omega: f64,
    /// Absent for purely Hamiltonian fits.
    #[serde(rename = "eps_Gamma")]
    pub eps_gamma: Option<f64>,
    pub eps_a: f64,
    #[serde(rename = "eps_S")]
    pub eps_s: f64,
    #[serde(rename = "eps_H")]
    pub eps_h: f64,
}

fn rel_error(est: &[f64], truth: &[f64], floor: f64) -> f64 {
    let diff: f64 = est.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = truth.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

/// `min_λ ‖Ĥ − H + λ1‖_F / ‖H − tr(H)/N·1‖_F`; both numerator and
/// denominator are invariant under a global shift of either matrix.
pub fn hamiltonian_error(h_hat: &CMatrix, h: &CMatrix) -> f64 {
    let n = h.nrows();
    let eye = CMatrix::identity(n, n);
    let diff = h_hat - h;
    let shift = diff.trace() / C64::new(n as f64, 0.0);
    let centered = h - &eye * (h.trace() / C64::new(n as f64, 0.0));
    (diff - eye * C64::new(shift.re, 0.0)).norm() / centered.norm()
}

/// Every error metric of a pipeline run. `eps_Gamma` is computed only when
/// `with_damping` is set.
pub fn compute_error_metrics(
    truth: &SystemSpec,
    params: &TransitionParams,
    coeffs: &SignalCoefficients,
    result: &ReconstructionResult,
    with_damping: bool,
) -> Result<ErrorMetrics> {
    let (true_params, _) = transition_params_from_spec(truth)?;
    let true_coeffs = exact_coefficients(truth);
    Ok(ErrorMetrics {
        eps_omega: rel_error(&params.omega, &true_params.omega, 0.0),
        eps_gamma: with_damping.then(|| rel_error(&params.damping, &true_params.damping, GAMMA_NORM_FLOOR)),
        eps_a: rel_error(&coeffs.a, &true_coeffs.a, 0.0),
        eps_s: result.s_error,
        eps_h: hamiltonian_error(&result.h_hat, &truth.hamiltonian()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_frequency_error() {
        let w = [0.3, 0.7, 1.0];
        let est: Vec<f64> = w.iter().map(|x| x * (1.0 + 1e-3)).collect();
        assert!((rel_error(&est, &w, 0.0) - 1e-3).abs() < 1e-15);
        assert_eq!(rel_error(&w, &w, 0.0), 0.0);
    }

    #[test]
    fn zero_truth_uses_floor() {
        assert_eq!(rel_error(&[0.0, 0.0], &[0.0, 0.0], GAMMA_NORM_FLOOR), 0.0);
        assert!((rel_error(&[1e-12, 0.0], &[0.0, 0.0], GAMMA_NORM_FLOOR) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let h = CMatrix::from_fn(3, 3, |i, j| C64::new(((i + 1) * (j + 2)) as f64 / 7.0 + (i == j) as u8 as f64, 0.0));
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let mut est = h.clone();
        est[(0, 1)] += C64::new(1e-3, 0.0);
        est[(1, 0)] += C64::new(1e-3, 0.0);
        let base = hamiltonian_error(&est, &h);
        let shifted = &h + CMatrix::identity(3, 3) * C64::new(4.2, 0.0);
        assert!((hamiltonian_error(&est, &shifted) - base).abs() < 1e-12);
        assert!(hamiltonian_error(&(&h + CMatrix::identity(3, 3) * C64::new(-1.0, 0.0)), &h) < 1e-15);
    }
}
