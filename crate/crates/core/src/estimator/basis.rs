use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::{BasisKind, TransitionParams};

/// Damped-sinusoid model functions for a set of transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFamily {
    pub kind: BasisKind,
    pub params: TransitionParams,
}

impl BasisFamily {
    pub fn new(kind: BasisKind, params: TransitionParams) -> Self {
        Self { kind, params }
    }

    /// Number of basis functions: `2M+1` (general) or `M+1` (real-symmetric).
    pub fn m_b(&self) -> usize {
        basis_count(self.kind, self.params.len())
    }
}

pub fn basis_count(kind: BasisKind, n_transitions: usize) -> usize {
    match kind {
        BasisKind::General => 2 * n_transitions + 1,
        BasisKind::RealSymmetric => n_transitions + 1,
    }
}

/// Sampled basis functions, one row per function and one column per time.
///
/// General rows are `e^{−Γ_m t}cos(ω_m t)`, `e^{−Γ_m t}sin(ω_m t)` for each
/// transition in turn; real-symmetric rows are the damped cosines only. The
/// last row is the constant 1.
pub fn evaluate_basis(family: &BasisFamily, times: &[f64]) -> DMatrix<f64> {
    evaluate_raw(family.kind, &family.params.omega, &family.params.damping, times)
}

pub(crate) fn evaluate_raw(
    kind: BasisKind,
    omega: &[f64],
    damping: &[f64],
    times: &[f64],
) -> DMatrix<f64> {
    let mb = basis_count(kind, omega.len());
    let mut g = DMatrix::zeros(mb, times.len());
    for (n, &t) in times.iter().enumerate() {
        for (m, (&w, &gam)) in omega.iter().zip(damping).enumerate() {
            let env = (-gam * t).exp();
            let (s, c) = (w * t).sin_cos();
            match kind {
                BasisKind::General => {
                    g[(2 * m, n)] = env * c;
                    g[(2 * m + 1, n)] = env * s;
                }
                BasisKind::RealSymmetric => g[(m, n)] = env * c,
            }
        }
        g[(mb - 1, n)] = 1.0;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(kind: BasisKind, damping: f64) -> BasisFamily {
        BasisFamily::new(
            kind,
            TransitionParams::new(vec![1.0, 2.0, 3.0], vec![damping; 3]).unwrap(),
        )
    }

    #[test]
    fn counts() {
        assert_eq!(family(BasisKind::General, 0.1).m_b(), 7);
        assert_eq!(family(BasisKind::RealSymmetric, 0.1).m_b(), 4);
    }

    #[test]
    fn origin_column() {
        let g = evaluate_basis(&family(BasisKind::General, 0.3), &[0.0]);
        assert_eq!(g.column(0).as_slice(), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn undamped_rows_are_pure_sinusoids() {
        let times: Vec<f64> = (0..20).map(|n| n as f64 * 0.37).collect();
        let g = evaluate_basis(&family(BasisKind::General, 0.0), &times);
        for (n, &t) in times.iter().enumerate() {
            assert_eq!(g[(2, n)], (2.0 * t).cos());
            assert_eq!(g[(5, n)], (3.0 * t).sin());
            assert_eq!(g[(6, n)], 1.0);
        }
    }

    #[test]
    fn direct_transcription_at_unit_time() {
        let g = evaluate_basis(&family(BasisKind::General, 0.1), &[1.0]);
        let e = (-0.1f64).exp();
        let expected = [
            e * 1f64.cos(),
            e * 1f64.sin(),
            e * 2f64.cos(),
            e * 2f64.sin(),
            e * 3f64.cos(),
            e * 3f64.sin(),
            1.0,
        ];
        for (i, x) in expected.iter().enumerate() {
            assert!((g[(i, 0)] - x).abs() < 1e-15);
        }
        let r = evaluate_basis(&family(BasisKind::RealSymmetric, 0.1), &[1.0]);
        assert!((r[(1, 0)] - e * 2f64.cos()).abs() < 1e-15);
        assert_eq!(r[(3, 0)], 1.0);
    }
}
