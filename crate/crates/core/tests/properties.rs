//! Invariants of the forward model, sampler, estimator and reconstructor.

use nalgebra::DMatrix;
use proptest::prelude::*;

use qsid::estimator::{evaluate_basis, log_posterior, orthogonalize, BasisFamily};
use qsid::model::{
    exact_coefficients, exact_probability, propagate_density, transition_params_from_spec, BasisKind, CMatrix,
    SystemSpec, TransitionParams, C64,
};
use qsid::reconstructor::{basis_error, hamiltonian_error, infer_level_structure, level_tolerance};
use qsid::rng;
use qsid::simulator::{
    generate_random_system, haar_basis_map, multinomial, repetitions_for_envelope, TraceSet,
};

fn random_spec(seed: u64, real: bool) -> SystemSpec {
    generate_random_system(3, 12.0, 72.0, real, &mut rng::stream(seed, &["spec".into()])).unwrap()
}

fn projectors(w: &CMatrix) -> Vec<CMatrix> {
    (0..w.nrows())
        .map(|nu| {
            let v = w.row(nu).adjoint();
            &v * v.adjoint()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_are_normalized_and_nonnegative(seed in any::<u64>(), real in any::<bool>(), t in 0.0..500.0f64) {
        let spec = random_spec(seed, real);
        for k in 0..3 {
            let p: Vec<f64> = (0..3).map(|l| exact_probability(&spec, k, l, t)).collect();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x > -1e-12));
        }
    }

    #[test]
    fn coefficient_expansion_matches_closed_form(seed in any::<u64>(), real in any::<bool>(), t in 0.0..500.0f64) {
        let spec = random_spec(seed, real);
        let (params, _) = transition_params_from_spec(&spec).unwrap();
        let coeffs = exact_coefficients(&spec);
        for k in 0..3 {
            let mut rho0 = CMatrix::zeros(3, 3);
            rho0[(k, k)] = C64::new(1.0, 0.0);
            let rho = propagate_density(&spec, &rho0, t);
            for l in 0..3 {
                let p = exact_probability(&spec, k, l, t);
                prop_assert!((coeffs.evaluate(&params, k, l, t) - p).abs() < 1e-11);
                prop_assert!((rho[(l, l)].re - p).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn energy_shift_leaves_traces_unchanged(seed in any::<u64>(), shift in -50.0..50.0f64, t in 0.0..300.0f64) {
        let spec = random_spec(seed, true);
        let shifted = spec.shifted(shift);
        for k in 0..3 {
            for l in 0..3 {
                let d = exact_probability(&spec, k, l, t) - exact_probability(&shifted, k, l, t);
                prop_assert!(d.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hamiltonian_error_ignores_global_shifts(seed in any::<u64>(), s1 in -10.0..10.0f64, s2 in -10.0..10.0f64) {
        let h = random_spec(seed, false).hamiltonian();
        let h_hat = random_spec(seed.wrapping_add(1), false).hamiltonian();
        let eye = CMatrix::identity(3, 3);
        let base = hamiltonian_error(&h_hat, &h);
        let moved = hamiltonian_error(&(&h_hat + &eye * C64::new(s1, 0.0)), &(&h + &eye * C64::new(s2, 0.0)));
        prop_assert!((base - moved).abs() < 1e-10 * base.max(1.0));
        prop_assert!(hamiltonian_error(&(&h + &eye * C64::new(s1, 0.0)), &h) < 1e-12);
    }

    #[test]
    fn posterior_is_invariant_to_data_scale(seed in any::<u64>(), scale in 0.01..100.0f64) {
        let spec = random_spec(seed, true);
        let (params, _) = transition_params_from_spec(&spec).unwrap();
        let times: Vec<f64> = (1..=60).map(|n| n as f64 * 0.7).collect();
        let mut r = rng::stream(seed, &["noise".into()]);
        let d: Vec<f64> = (0..9 * times.len()).map(|i| (i as f64 * 0.37).sin() + rand::Rng::random::<f64>(&mut r)).collect();
        let scaled: Vec<f64> = d.iter().map(|x| x * scale).collect();
        let a = TraceSet::new(3, times.clone(), d, vec![0; 3 * times.len()]).unwrap();
        let b = TraceSet::new(3, times.clone(), scaled, vec![0; 3 * times.len()]).unwrap();
        let pa = log_posterior(&params, BasisKind::RealSymmetric, &a).unwrap().logp;
        let pb = log_posterior(&params, BasisKind::RealSymmetric, &b).unwrap().logp;
        prop_assert!((pa - pb).abs() < 1e-9 * pa.abs().max(1.0));
    }

    #[test]
    fn exact_projectors_have_zero_basis_error(seed in any::<u64>(), real in any::<bool>(), n in 2usize..6) {
        let w = haar_basis_map(n, real, &mut rng::stream(seed, &["haar".into()]));
        let defect = (w.adjoint() * &w - CMatrix::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(defect < 1e-12);
        prop_assert!(basis_error(&projectors(&w)) < 1e-12);
    }

    #[test]
    fn basis_error_grows_quadratically_with_projector_overlap(seed in any::<u64>(), eps in 1e-4..1e-2f64) {
        // rotating one eigenvector by ε toward another leaves the overlap of
        // its projector with the other at sin²ε
        let w = haar_basis_map(3, true, &mut rng::stream(seed, &["haar".into()]));
        let mut p = projectors(&w);
        let v0 = w.row(0).adjoint();
        let v1 = w.row(1).adjoint();
        let rotated = &v0 * C64::new(eps.cos(), 0.0) + &v1 * C64::new(eps.sin(), 0.0);
        p[0] = &rotated * rotated.adjoint();
        let s = basis_error(&p);
        prop_assert!((s - eps.sin().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn multinomial_counts_sum_to_trials(seed in any::<u64>(), n in 1u32..5000, w in prop::collection::vec(0.0..1.0f64, 2..6)) {
        let total: f64 = w.iter().sum();
        prop_assume!(total > 0.0);
        let p: Vec<f64> = w.iter().map(|x| x / total).collect();
        let counts = multinomial(n, &p, &mut rng::stream(seed, &["multinomial".into()]));
        prop_assert_eq!(counts.iter().sum::<u32>(), n);
        for (c, q) in counts.iter().zip(&p) {
            if *q == 0.0 {
                prop_assert_eq!(*c, 0);
            }
        }
    }

    #[test]
    fn adaptive_repetitions_meet_target_and_are_monotone(e1 in 1e-4..1.0f64, e2 in 1e-4..1.0f64, target in 0.5..20.0f64) {
        let max = 10_000;
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let (n_lo, n_hi) = (repetitions_for_envelope(lo, target, max), repetitions_for_envelope(hi, target, max));
        prop_assert!(n_lo >= n_hi);
        for (e, n) in [(lo, n_lo), (hi, n_hi)] {
            prop_assert!(n >= 1 && n <= max);
            if n < max {
                prop_assert!(e >= target / (n as f64).sqrt());
            }
            if n > 1 {
                prop_assert!(e < target / ((n - 1) as f64).sqrt());
            }
        }
    }

    #[test]
    fn orthonormalization_spans_the_basis(
        omega in prop::collection::vec(0.1..3.0f64, 1..4),
        damping in prop::collection::vec(0.0..0.05f64, 4),
        general in any::<bool>(),
    ) {
        let mut omega = omega;
        omega.sort_by(f64::total_cmp);
        prop_assume!(omega.windows(2).all(|w| w[1] - w[0] > 0.05));
        let damping = damping[..omega.len()].to_vec();
        let kind = if general { BasisKind::General } else { BasisKind::RealSymmetric };
        let times: Vec<f64> = (1..=200).map(|n| n as f64 * 0.5).collect();
        let g = evaluate_basis(&BasisFamily::new(kind, TransitionParams::new(omega, damping).unwrap()), &times);
        let proj = orthogonalize(&g).unwrap();
        let h = proj.h_matrix();
        prop_assert!((h * h.transpose() - DMatrix::identity(h.nrows(), h.nrows())).abs().max() < 1e-10);
        prop_assert!((&g - (&g * h.transpose()) * h).norm() < 1e-10 * g.norm());
    }
}

/// The level structure recovered from a spectrum's frequencies reproduces
/// its eigenvalue ladder, up to the mirrored labeling.
#[test]
fn level_structure_round_trip() {
    for i in 0..100u64 {
        let spec = random_spec(1000 + i, i % 2 == 0);
        let (params, _) = transition_params_from_spec(&spec).unwrap();
        let s = infer_level_structure(&params.omega, level_tolerance(200.0)).unwrap();
        let l = spec.lambda();
        let truth: Vec<f64> = l.iter().map(|x| x - l[0]).collect();
        let mirror = s.mirror().unwrap();
        let close = |a: &[f64]| a.iter().zip(&truth).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&s.lambda_hat) || close(&mirror.lambda_hat), "system {i}: {:?} vs {truth:?}", s.lambda_hat);
    }
}

/// `S` agrees with a direct evaluation of every pairwise trace.
#[test]
fn basis_error_matches_exhaustive_pairs() {
    for i in 0..50u64 {
        let mut r = rng::stream(i, &["pairs".into()]);
        let p: Vec<CMatrix> = (0..3)
            .map(|_| {
                let a = CMatrix::from_fn(3, 3, |_, _| C64::new(rand::Rng::random::<f64>(&mut r) - 0.5, rand::Rng::random::<f64>(&mut r) - 0.5));
                &a * a.adjoint()
            })
            .collect();
        let mut worst: f64 = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let tr = (p[a].adjoint() * &p[b]).trace();
                let delta = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((tr - C64::new(delta, 0.0)).norm());
            }
        }
        assert!((basis_error(&p) - worst).abs() < 1e-12);
    }
}

/// Damping rates match `Γ = ½(γ_μ − γ_ν)²` recomputed from the dephasing
/// operator, and the geometric-mean Q stays inside the generator's range.
#[test]
fn damping_rates_match_dephasing_spectrum() {
    for i in 0..100u64 {
        let spec = random_spec(2000 + i, i % 2 == 1);
        let (params, map) = transition_params_from_spec(&spec).unwrap();
        let v = spec.dephasing_operator();
        let gamma: Vec<f64> = (0..3).map(|nu| {
            let x = spec.eigenvector(nu);
            (x.adjoint() * &v * &x)[(0, 0)].re
        }).collect();
        for m in 0..3 {
            let (mu, nu) = map.pairs[m];
            let expected = 0.5 * (gamma[mu] - gamma[nu]).powi(2);
            assert!((params.damping[m] - expected).abs() < 1e-12 * expected.max(1.0), "system {i}");
        }
        let q: f64 = (0..3).map(|m| (params.omega[m] / params.damping[m]).ln()).sum::<f64>() / 3.0;
        let q = q.exp();
        assert!((q - params.geometric_mean_q().unwrap()).abs() < 1e-9 * q);
        assert!((12.0 - 1e-9..=72.0 + 1e-9).contains(&q), "system {i}: Q = {q}");
    }
}
