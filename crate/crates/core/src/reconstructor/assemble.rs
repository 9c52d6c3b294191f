use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::levels::LevelStructure;
use super::overlaps::ProjectorSet;
use super::{GaugeRecord, ReconstructionResult};
use crate::error::{Error, Result};
use crate::model::{CMatrix, C64};

/// Convention used to pick one member of the gauge family `D†ĤD + λ1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeConvention {
    /// Off-diagonal elements known to be real and nonnegative; violations
    /// are reported as [`Error::GaugeUnfixable`].
    RealPositiveOffdiag,
    /// Phases chosen to make the first row real and nonnegative, with no
    /// requirement on the remaining elements (the smallest off-diagonal real
    /// part is still recorded).
    PhaseFree,
}

/// Closest rank-one projector `v v†` to a Hermitian matrix (dominant
/// eigenvector, unit norm).
pub fn closest_projector(p: &CMatrix) -> CMatrix {
    let herm = (p + p.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let top = eig.eigenvalues.imax();
    let v: DVector<C64> = eig.eigenvectors.column(top).into_owned();
    let v = &v / C64::new(v.norm(), 0.0);
    &v * v.adjoint()
}

/// Diagonal phases `φ` making `Ĥ_{kℓ}` real and nonnegative along a
/// spanning tree rooted at level 0: first-row elements where they are
/// resolvable, then the largest remaining links.
fn gauge_phases(h: &CMatrix) -> Vec<f64> {
    let n = h.nrows();
    let floor = 1e-12 * h.camax().max(f64::MIN_POSITIVE);
    let mut phase: Vec<Option<f64>> = vec![None; n];
    phase[0] = Some(0.0);
    for l in 1..n {
        if h[(0, l)].norm() > floor {
            phase[l] = Some(-h[(0, l)].arg());
        }
    }
    loop {
        let mut link: Option<(usize, usize, f64)> = None;
        for k in (0..n).filter(|&k| phase[k].is_some()) {
            for l in (0..n).filter(|&l| phase[l].is_none()) {
                let mag = h[(k, l)].norm();
                if mag > floor && link.is_none_or(|x| mag > x.2) {
                    link = Some((k, l, mag));
                }
            }
        }
        match link {
            // (D†HD)_{kℓ} = e^{−iφ_k} H_{kℓ} e^{iφ_ℓ}
            Some((k, l, _)) => phase[l] = Some(phase[k].unwrap() - h[(k, l)].arg()),
            None => break,
        }
    }
    phase.into_iter().map(|p| p.unwrap_or(0.0)).collect()
}

/// `Ĥ = Σ_ν λ̂_ν v_ν v_ν†` from rank-one projectors, then gauge fixed.
pub fn assemble_hamiltonian(
    structure: &LevelStructure,
    projectors: &ProjectorSet,
    convention: GaugeConvention,
) -> Result<ReconstructionResult> {
    let n = structure.dim();
    if projectors.projectors.len() != n {
        return Err(Error::InvalidArgument("projector count does not match the level structure".into()));
    }
    if !projectors.s_error.is_finite() {
        return Err(Error::InvalidArgument("non-finite basis error".into()));
    }
    let mut h = CMatrix::zeros(n, n);
    for (p, &lam) in projectors.projectors.iter().zip(&structure.lambda_hat) {
        h += closest_projector(p) * C64::new(lam, 0.0);
    }
    let phases = gauge_phases(&h);
    let d = CMatrix::from_diagonal(&DVector::from_iterator(n, phases.iter().map(|&p| C64::from_polar(1.0, p))));
    let mut h = d.adjoint() * h * &d;
    h = (&h + h.adjoint()) * C64::new(0.5, 0.0);

    let mut worst_offdiag = f64::INFINITY;
    for k in 0..n {
        for l in 0..n {
            if k != l {
                worst_offdiag = worst_offdiag.min(h[(k, l)].re);
            }
        }
    }
    let tol = 1e-9 * h.camax();
    let fixed = match convention {
        GaugeConvention::RealPositiveOffdiag => {
            h.iter_mut().for_each(|z| z.im = 0.0);
            worst_offdiag >= -tol
        }
        GaugeConvention::PhaseFree => true,
    };
    let result = ReconstructionResult {
        h_hat: h,
        lambda_hat: structure.lambda_hat.clone(),
        structure: structure.clone(),
        s_error: projectors.s_error,
        run_errors: projectors.run_errors.clone(),
        chosen_run: projectors.chosen_run,
        gauge: GaugeRecord { convention, lambda_0: 0.0, phases, fixed, worst_offdiag },
        metrics: None,
    };
    if fixed {
        Ok(result)
    } else {
        Err(Error::GaugeUnfixable { worst: worst_offdiag, best_effort: Box::new(result) })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{exact_coefficients, transition_params_from_spec, SystemSpec};
    use crate::reconstructor::{fit_overlaps, infer_level_structure, OverlapOptions};
    use crate::rng;
    use crate::simulator::generate_random_system;
    use crate::model::BasisKind;

    fn exact_projectors(spec: &SystemSpec) -> ProjectorSet {
        let projectors: Vec<CMatrix> = (0..spec.dim())
            .map(|nu| {
                let v = spec.eigenvector(nu);
                &v * v.adjoint()
            })
            .collect();
        let s_error = super::super::basis_error(&projectors);
        ProjectorSet { projectors, s_error, chosen_run: 0, run_errors: vec![Some(s_error)], max_residual: 0.0 }
    }

    /// The inferred ladder or its mirror, whichever matches the truth.
    pub(crate) fn true_structure(spec: &SystemSpec, omega: &[f64]) -> LevelStructure {
        let s = infer_level_structure(omega, 1e-9).unwrap();
        let l = spec.lambda();
        if (s.lambda_hat[1] - (l[1] - l[0])).abs() < 1e-9 {
            s
        } else {
            s.mirror().unwrap()
        }
    }

    #[test]
    fn exact_projectors_give_shifted_hamiltonian() {
        for seed in 0..5 {
            let spec = generate_random_system(3, 12.0, 72.0, true, &mut rng::stream(seed, &["asm".into()])).unwrap();
            let (p, _) = transition_params_from_spec(&spec).unwrap();
            let structure = true_structure(&spec, &p.omega);
            let r = assemble_hamiltonian(&structure, &exact_projectors(&spec), GaugeConvention::RealPositiveOffdiag)
                .unwrap();
            let want = spec.hamiltonian() - CMatrix::identity(3, 3) * C64::new(spec.lambda()[0], 0.0);
            assert!((&r.h_hat - want).camax() < 1e-9);
            assert!((&r.h_hat - r.h_hat.adjoint()).norm() < 1e-12);
        }
    }

    #[test]
    fn diagonal_hamiltonian() {
        let spec = SystemSpec::new(vec![0.0, 1.0, 3.0], vec![0.0; 3], CMatrix::identity(3, 3), true).unwrap();
        let structure = infer_level_structure(&[1.0, 2.0, 3.0], 1e-9).unwrap();
        let r = assemble_hamiltonian(&structure, &exact_projectors(&spec), GaugeConvention::RealPositiveOffdiag)
            .unwrap();
        assert!((&r.h_hat - spec.hamiltonian()).camax() < 1e-12);
    }

    #[test]
    fn mirrored_structure_is_not_gauge_fixable() {
        let spec = generate_random_system(3, 12.0, 72.0, true, &mut rng::stream(8, &["asm".into()])).unwrap();
        let (p, _) = transition_params_from_spec(&spec).unwrap();
        let structure = true_structure(&spec, &p.omega).mirror().unwrap();
        let coeffs = exact_coefficients(&spec);
        let set = fit_overlaps(&coeffs, &structure, BasisKind::RealSymmetric, &OverlapOptions::default(), &mut rng::stream(0, &[]))
            .unwrap();
        assert!(set.s_error < 1e-8);
        assert!(matches!(
            assemble_hamiltonian(&structure, &set, GaugeConvention::RealPositiveOffdiag),
            Err(Error::GaugeUnfixable { .. })
        ));
    }

    #[test]
    fn closest_projector_of_a_projector_is_itself() {
        let v = DVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let p = &v * v.adjoint();
        assert!((closest_projector(&p) - &p).camax() < 1e-14);
    }
}
