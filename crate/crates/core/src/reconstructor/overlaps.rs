use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::levels::LevelStructure;
use crate::error::{Error, Result};
use crate::estimator::{minimize, BfgsOptions};
use crate::model::{BasisKind, CMatrix, SignalCoefficients, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlapOptions {
    /// Independent fits; run 0 starts from the closed-form guess, later runs
    /// from random perturbations of it.
    pub n_runs: usize,
    /// A run is rejected if any trace ends with a larger squared mismatch.
    pub residual_bound: f64,
    /// Relative scale of the random start perturbations.
    pub perturbation: f64,
}

impl Default for OverlapOptions {
    fn default() -> Self {
        Self { n_runs: 4, residual_bound: 0.25, perturbation: 0.3 }
    }
}

/// Fitted eigenprojectors in the measurement basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorSet {
    /// `P_ν` with `(P_ν)_{ℓk}` the fitted overlap product of trace `(k, ℓ)`.
    pub projectors: Vec<CMatrix>,
    pub s_error: f64,
    pub chosen_run: usize,
    /// Basis error of every run, `None` for rejected runs.
    pub run_errors: Vec<Option<f64>>,
    /// Largest per-trace squared mismatch of the chosen run.
    pub max_residual: f64,
}

/// `S = max_{μν} |Tr(P_ν† P_μ) − δ_{μν}|`.
pub fn basis_error(projectors: &[CMatrix]) -> f64 {
    let mut worst: f64 = 0.0;
    for (nu, p) in projectors.iter().enumerate() {
        for (mu, q) in projectors.iter().enumerate() {
            let tr: C64 = p.iter().zip(q.iter()).map(|(x, y)| x.conj() * y).sum();
            let delta = if mu == nu { 1.0 } else { 0.0 };
            worst = worst.max((tr - C64::new(delta, 0.0)).norm());
        }
    }
    worst
}

/// Targets of one trace: `(μ, ν, a + ib)` per transition, `c`, and `δ_kℓ`.
struct TraceTargets {
    pairs: Vec<(usize, usize, C64)>,
    c: f64,
    delta: f64,
}

impl TraceTargets {
    fn new(coeffs: &SignalCoefficients, structure: &LevelStructure, k: usize, l: usize) -> Self {
        let pairs = structure
            .assignment
            .iter()
            .enumerate()
            .map(|(m, &(mu, nu))| (mu, nu, C64::new(coeffs.a(k, l, m), coeffs.b(k, l, m))))
            .collect();
        Self { pairs, c: coeffs.c(k, l), delta: if k == l { 1.0 } else { 0.0 } }
    }

    /// Squared mismatch and its gradient with respect to `(Re z, Im z)`.
    ///
    /// ```text
    /// F = Σ_m |z̄_μ z_ν − (a_m + i b_m)|² + (Σ|z_ν|² − c)² + |Σ z_ν − δ|²
    /// ```
    ///
    /// and `∂F/∂Re z + i ∂F/∂Im z = 2 ∂F/∂z̄`.
    fn objective(&self, z: &[C64]) -> (f64, Vec<C64>) {
        let mut grad = vec![C64::new(0.0, 0.0); z.len()];
        let mut f = 0.0;
        for &(mu, nu, target) in &self.pairs {
            let w = z[mu].conj() * z[nu] - target;
            f += w.norm_sqr();
            grad[mu] += z[nu] * w.conj();
            grad[nu] += w * z[mu];
        }
        let s: f64 = z.iter().map(|v| v.norm_sqr()).sum::<f64>() - self.c;
        let u: C64 = z.iter().sum::<C64>() - self.delta;
        f += s * s + u.norm_sqr();
        for (g, v) in grad.iter_mut().zip(z) {
            *g += 2.0 * s * v + u;
            *g *= 2.0;
        }
        (f, grad)
    }

    /// Closed-form starting point from the magnitudes and phases of the
    /// products relative to level 0.
    fn initial_guess(&self, n: usize, real: bool, k: usize) -> Vec<C64> {
        // log|z_μ| + log|z_ν| = log|a + ib| in the least-squares sense over
        // the resolvable products; levels outside them start at zero
        let usable: Vec<_> = self.pairs.iter().filter(|p| p.2.norm() > 1e-12).collect();
        let mut magnitudes = vec![0.0; n];
        if usable.is_empty() {
            // nothing ties levels to this trace; start from the labeling
            // that matches the measurement basis
            magnitudes[k % n] = self.c.max(0.0).sqrt();
        } else {
            let mut a = nalgebra::DMatrix::<f64>::zeros(usable.len(), n);
            let mut rhs = nalgebra::DVector::<f64>::zeros(usable.len());
            for (row, &&(mu, nu, t)) in usable.iter().enumerate() {
                a[(row, mu)] = 1.0;
                a[(row, nu)] = 1.0;
                rhs[row] = t.norm().ln();
            }
            let touched: Vec<bool> = (0..n).map(|j| a.column(j).iter().any(|&v| v != 0.0)).collect();
            if let Ok(x) = a.svd(true, true).solve(&rhs, 1e-12) {
                for j in (0..n).filter(|&j| touched[j] && x[j].is_finite()) {
                    magnitudes[j] = x[j].exp();
                }
            }
        }
        let mut z: Vec<C64> = magnitudes.iter().map(|&r| C64::new(r, 0.0)).collect();
        for &(mu, nu, t) in &self.pairs {
            if mu == 0 && t.norm() > 0.0 {
                z[nu] = if real {
                    C64::new(magnitudes[nu] * t.re.signum(), 0.0)
                } else {
                    C64::from_polar(magnitudes[nu], t.arg())
                };
            }
        }
        // the global sign is fixed only through Σz = δ
        let sum: C64 = z.iter().sum();
        if (sum - self.delta).norm() > (-sum - self.delta).norm() {
            z.iter_mut().for_each(|v| *v = -*v);
        }
        z
    }
}

fn pack(z: &[C64], real: bool) -> Vec<f64> {
    if real {
        z.iter().map(|v| v.re).collect()
    } else {
        z.iter().flat_map(|v| [v.re, v.im]).collect()
    }
}

fn unpack(x: &[f64], real: bool) -> Vec<C64> {
    if real {
        x.iter().map(|&v| C64::new(v, 0.0)).collect()
    } else {
        x.chunks(2).map(|p| C64::new(p[0], p[1])).collect()
    }
}

fn fit_trace(targets: &TraceTargets, start: &[C64], real: bool) -> (Vec<C64>, f64) {
    let fg = |x: &[f64]| {
        let (f, g) = targets.objective(&unpack(x, real));
        (f, pack(&g, real))
    };
    let options = BfgsOptions { max_iterations: 500, gradient_tolerance: 1e-14, ..Default::default() };
    let out = minimize(fg, &pack(start, real), &options);
    (unpack(&out.x, real), out.f)
}

/// Align trace `(ℓ, k)` with the conjugate of `(k, ℓ)`, average the two, and
/// fix each pair's free phase so the rank-one cocycle
/// `Σ_ν P(0,k) P(k,ℓ) P(ℓ,0)` is real and positive.
fn assemble_projectors(z: &[Vec<C64>], n: usize) -> Vec<CMatrix> {
    // entry (ℓ, k) of P_ν comes from trace (k, ℓ), stored at index k·n + ℓ
    let mut p = vec![CMatrix::zeros(n, n); n];
    for k in 0..n {
        for l in 0..n {
            for nu in 0..n {
                p[nu][(l, k)] = z[k * n + l][nu];
            }
        }
    }
    for k in 0..n {
        for l in k + 1..n {
            // trace (k,ℓ) carries an arbitrary phase relative to (ℓ,k)
            let overlap: C64 = (0..n).map(|nu| p[nu][(k, l)] * p[nu][(l, k)]).sum();
            let phase = if overlap.norm() > 0.0 { (overlap / overlap.norm()).conj() } else { C64::new(1.0, 0.0) };
            for proj in p.iter_mut() {
                let lower = proj[(l, k)] * phase;
                let upper = proj[(k, l)];
                let avg = 0.5 * (lower + upper.conj());
                proj[(l, k)] = avg;
                proj[(k, l)] = avg.conj();
            }
        }
    }
    for k in 1..n {
        for l in k + 1..n {
            let cocycle: C64 = (0..n).map(|nu| p[nu][(0, k)] * p[nu][(k, l)] * p[nu][(l, 0)]).sum();
            if cocycle.norm() == 0.0 {
                continue;
            }
            let phase = (cocycle / cocycle.norm()).conj();
            for proj in p.iter_mut() {
                proj[(k, l)] *= phase;
                proj[(l, k)] = proj[(k, l)].conj();
            }
        }
    }
    p
}

/// All orderings of `0..n`.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// `Σ_μν |Tr(P_ν† P_μ) − δ_μν|²`, the smooth companion of [`basis_error`]
/// used to compare branch combinations.
fn orthogonality_defect(projectors: &[CMatrix]) -> f64 {
    let mut total = 0.0;
    for (nu, p) in projectors.iter().enumerate() {
        for (mu, q) in projectors.iter().enumerate() {
            let tr: C64 = p.iter().zip(q.iter()).map(|(x, y)| x.conj() * y).sum();
            let delta = if mu == nu { 1.0 } else { 0.0 };
            total += (tr - C64::new(delta, 0.0)).norm_sqr();
        }
    }
    total
}

/// Fit the overlap products `z_ν = ⟨ℓ|ξ_ν⟩⟨ξ_ν|k⟩` of every trace to the
/// estimated coefficients and assemble the projectors `P_ν`.
///
/// Traces are fitted independently. Among the accepted runs the one with the
/// smallest basis error is kept. A single trace can have several equally
/// good solutions (when an overlap vanishes, the levels it separated become
/// interchangeable), so every trace is also fitted from each level
/// permutation of its initial guess. Starting from the kept run, traces are
/// then switched one at a time to any comparably good alternative that makes
/// the projectors more orthogonal; the switched set replaces the run only if
/// its basis error is smaller.
pub fn fit_overlaps<R: Rng + ?Sized>(
    coeffs: &SignalCoefficients,
    structure: &LevelStructure,
    kind: BasisKind,
    options: &OverlapOptions,
    rng: &mut R,
) -> Result<ProjectorSet> {
    let n = structure.dim();
    if coeffs.dim != n || coeffs.n_transitions != structure.assignment.len() {
        return Err(Error::InvalidArgument("coefficients do not match the level structure".into()));
    }
    if options.n_runs == 0 {
        return Err(Error::InvalidArgument("need at least one overlap run".into()));
    }
    let real = kind == BasisKind::RealSymmetric;
    let targets: Vec<TraceTargets> = (0..n)
        .flat_map(|k| (0..n).map(move |l| (k, l)))
        .map(|(k, l)| TraceTargets::new(coeffs, structure, k, l))
        .collect();
    let guesses: Vec<Vec<C64>> = targets.iter().enumerate().map(|(i, t)| t.initial_guess(n, real, i / n)).collect();
    // per-trace pool of (solution, mismatch) across runs and permuted starts
    let mut pools: Vec<Vec<(Vec<C64>, f64)>> = vec![Vec::new(); targets.len()];

    let mut best: Option<(ProjectorSet, Vec<Vec<C64>>)> = None;
    let mut run_errors = Vec::with_capacity(options.n_runs);
    for run in 0..options.n_runs {
        let mut fitted = Vec::with_capacity(targets.len());
        let mut max_residual: f64 = 0.0;
        for (i, (t, guess)) in targets.iter().zip(&guesses).enumerate() {
            let start: Vec<C64> = if run == 0 {
                guess.clone()
            } else {
                guess
                    .iter()
                    .map(|&v| {
                        let scale = 1.0 + options.perturbation * rng.sample::<f64, _>(StandardNormal);
                        let shift = if real {
                            0.0
                        } else {
                            options.perturbation * rng.sample::<f64, _>(StandardNormal)
                        };
                        v * scale * C64::from_polar(1.0, shift)
                    })
                    .collect()
            };
            let (z, f) = fit_trace(t, &start, real);
            max_residual = max_residual.max(f);
            pools[i].push((z.clone(), f));
            fitted.push(z);
        }
        if !(max_residual <= options.residual_bound) {
            run_errors.push(None);
            continue;
        }
        let projectors = assemble_projectors(&fitted, n);
        let s_error = basis_error(&projectors);
        run_errors.push(Some(s_error));
        if best.as_ref().is_none_or(|b| s_error < b.0.s_error) {
            let set = ProjectorSet { projectors, s_error, chosen_run: run, run_errors: Vec::new(), max_residual };
            best = Some((set, fitted));
        }
    }
    let (mut best, mut chosen) = best.ok_or(Error::FitDiverged(options.n_runs))?;
    best.run_errors = run_errors;

    if n <= 4 {
        for (i, (t, guess)) in targets.iter().zip(&guesses).enumerate() {
            for perm in permutations(n).into_iter().skip(1) {
                let start: Vec<C64> = perm.iter().map(|&j| guess[j]).collect();
                pools[i].push(fit_trace(t, &start, real));
            }
        }
    }
    for pool in pools.iter_mut() {
        let f_min = pool.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        pool.retain(|c| c.1 <= options.residual_bound && c.1 <= 10.0 * f_min + 1e-10);
    }
    let mut current = orthogonality_defect(&assemble_projectors(&chosen, n));
    for _pass in 0..4 {
        let mut improved = false;
        for (i, pool) in pools.iter().enumerate() {
            for (z, _) in pool {
                let previous = std::mem::replace(&mut chosen[i], z.clone());
                let d = orthogonality_defect(&assemble_projectors(&chosen, n));
                if d < current * (1.0 - 1e-9) {
                    current = d;
                    improved = true;
                } else {
                    chosen[i] = previous;
                }
            }
        }
        if !improved {
            break;
        }
    }
    let projectors = assemble_projectors(&chosen, n);
    let s_error = basis_error(&projectors);
    if s_error < best.s_error {
        best.max_residual =
            targets.iter().zip(&chosen).map(|(t, z)| t.objective(z).0).fold(0.0, f64::max);
        best.projectors = projectors;
        best.s_error = s_error;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exact_coefficients, overlaps, SystemSpec};
    use crate::rng;
    use crate::simulator::generate_random_system;

    fn structure_for(spec: &SystemSpec) -> LevelStructure {
        let (p, _) = crate::model::transition_params_from_spec(spec).unwrap();
        crate::reconstructor::assemble::tests::true_structure(spec, &p.omega)
    }

    #[test]
    fn identity_basis_gives_elementary_projectors() {
        let spec = SystemSpec::new(vec![0.0, 1.0, 3.0], vec![0.0; 3], CMatrix::identity(3, 3), true).unwrap();
        let coeffs = exact_coefficients(&spec);
        let set = fit_overlaps(&coeffs, &structure_for(&spec), BasisKind::RealSymmetric, &OverlapOptions::default(), &mut rng::stream(0, &[]))
            .unwrap();
        assert!(set.s_error < 1e-12);
        for (nu, p) in set.projectors.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == nu && j == nu { 1.0 } else { 0.0 };
                    assert!((p[(i, j)] - C64::new(want, 0.0)).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn noiseless_round_trip_recovers_overlap_magnitudes() {
        for seed in 0..5 {
            let spec = generate_random_system(3, 12.0, 72.0, true, &mut rng::stream(seed, &["ov".into()])).unwrap();
            let coeffs = exact_coefficients(&spec);
            let set = fit_overlaps(&coeffs, &structure_for(&spec), BasisKind::RealSymmetric, &OverlapOptions::default(), &mut rng::stream(seed, &[]))
                .unwrap();
            assert!(set.s_error < 1e-8, "S = {}", set.s_error);
            for k in 0..3 {
                for l in 0..3 {
                    let z = overlaps(&spec, k, l);
                    for nu in 0..3 {
                        assert!((set.projectors[nu][(l, k)].norm() - z[nu].norm()).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn complex_round_trip() {
        let spec = generate_random_system(3, 12.0, 72.0, false, &mut rng::stream(3, &["ov".into()])).unwrap();
        let coeffs = exact_coefficients(&spec);
        let set = fit_overlaps(&coeffs, &structure_for(&spec), BasisKind::General, &OverlapOptions::default(), &mut rng::stream(1, &[]))
            .unwrap();
        assert!(set.s_error < 1e-8, "S = {}", set.s_error);
    }

    #[test]
    fn scaled_projector_error() {
        let mut p: Vec<CMatrix> = (0..3)
            .map(|nu| {
                let mut m = CMatrix::zeros(3, 3);
                m[(nu, nu)] = C64::new(1.0, 0.0);
                m
            })
            .collect();
        assert_eq!(basis_error(&p), 0.0);
        p[0] *= C64::new(1.001, 0.0);
        assert!((basis_error(&p) - 2.001e-3).abs() < 1e-12);
    }

    #[test]
    fn impossible_targets_diverge() {
        let spec = SystemSpec::new(vec![0.0, 1.0, 3.0], vec![0.0; 3], CMatrix::identity(3, 3), true).unwrap();
        let mut coeffs = exact_coefficients(&spec);
        coeffs.c.iter_mut().for_each(|c| *c = 40.0);
        let opts = OverlapOptions { n_runs: 2, ..Default::default() };
        assert!(matches!(
            fit_overlaps(&coeffs, &structure_for(&spec), BasisKind::RealSymmetric, &opts, &mut rng::stream(0, &[])),
            Err(Error::FitDiverged(2))
        ));
    }
}
