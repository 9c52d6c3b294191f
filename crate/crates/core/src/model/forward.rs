use super::{
    BasisKind, CMatrix, SignalCoefficients, SystemSpec, TransitionIndexMap, TransitionParams, C64,
    DEGENERACY_TOLERANCE,
};
use crate::error::{Error, Result};

/// All `(ω, Γ, (μ, ν))` for `μ < ν`, stably sorted by `ω`.
fn transition_table(spec: &SystemSpec) -> Vec<(f64, f64, (usize, usize))> {
    let (lambda, gamma) = (spec.lambda(), spec.gamma());
    let n = spec.dim();
    let mut table = Vec::with_capacity(spec.n_transitions());
    for mu in 0..n {
        for nu in mu + 1..n {
            let omega = lambda[nu] - lambda[mu];
            let rate = 0.5 * (gamma[mu] - gamma[nu]).powi(2);
            table.push((omega, rate, (mu, nu)));
        }
    }
    table.sort_by(|a, b| a.0.total_cmp(&b.0));
    table
}

/// Transition frequencies `ω = λ_ν − λ_μ` and dephasing rates
/// `Γ = ½(γ_μ − γ_ν)²` for every level pair, ascending in `ω`.
pub fn transition_params_from_spec(
    spec: &SystemSpec,
) -> Result<(TransitionParams, TransitionIndexMap)> {
    let table = transition_table(spec);
    let omega_max = table.last().map(|t| t.0).unwrap_or(0.0);
    let tol = DEGENERACY_TOLERANCE * omega_max;
    if table[0].0 <= tol {
        return Err(Error::DegenerateSpectrum(table[0].0, 0.0));
    }
    for w in table.windows(2) {
        if w[1].0 - w[0].0 < tol {
            return Err(Error::DegenerateSpectrum(w[0].0, w[1].0));
        }
    }
    let params = TransitionParams {
        omega: table.iter().map(|t| t.0).collect(),
        damping: table.iter().map(|t| t.1).collect(),
    };
    let map = TransitionIndexMap { pairs: table.iter().map(|t| t.2).collect() };
    Ok((params, map))
}

/// Overlap products `z_ν = ⟨ℓ|ξ_ν⟩⟨ξ_ν|k⟩` for initial state `k` and
/// outcome `ℓ`.
pub fn overlaps(spec: &SystemSpec, k: usize, l: usize) -> Vec<C64> {
    let w = spec.basis_map();
    (0..spec.dim()).map(|nu| w[(nu, l)].conj() * w[(nu, k)]).collect()
}

/// Coefficients of the damped-sinusoid expansion of every trace. Transition
/// index `m` follows ascending frequency order.
///
/// With `z_ν` the overlap products of trace `(k, ℓ)` and `(μ, ν)` the level
/// pair of transition `m`: `a = Re(z_μ z̄_ν)`, `b = Im(z̄_μ z_ν)`,
/// `c = Σ_ν |z_ν|²`.
pub fn exact_coefficients(spec: &SystemSpec) -> SignalCoefficients {
    let n = spec.dim();
    let table = transition_table(spec);
    let kind = if spec.is_real_symmetric() { BasisKind::RealSymmetric } else { BasisKind::General };
    let mut coeffs = SignalCoefficients::zeros(n, table.len(), kind);
    for k in 0..n {
        for l in 0..n {
            let z = overlaps(spec, k, l);
            coeffs.set_c(k, l, z.iter().map(|v| v.norm_sqr()).sum());
            for (m, &(_, _, (mu, nu))) in table.iter().enumerate() {
                let prod = z[mu].conj() * z[nu];
                let b = if spec.is_real_symmetric() { 0.0 } else { prod.im };
                coeffs.set(k, l, m, prod.re, b);
            }
        }
    }
    coeffs
}

/// Probability of finding outcome `ℓ` at time `t` after preparing `|k⟩`.
pub fn exact_probability(spec: &SystemSpec, k: usize, l: usize, t: f64) -> f64 {
    let n = spec.dim();
    assert!(k < n && l < n, "basis index out of range");
    assert!(t >= 0.0, "negative time");
    let (lambda, gamma) = (spec.lambda(), spec.gamma());
    let z = overlaps(spec, k, l);
    let mut p: f64 = z.iter().map(|v| v.norm_sqr()).sum();
    for mu in 0..n {
        for nu in mu + 1..n {
            let omega = lambda[nu] - lambda[mu];
            let rate = 0.5 * (gamma[mu] - gamma[nu]).powi(2);
            let prod = z[mu].conj() * z[nu];
            let (s, c) = (omega * t).sin_cos();
            p += 2.0 * (-rate * t).exp() * (prod.re * c + prod.im * s);
        }
    }
    p
}

/// Density matrix at time `t` in the measurement basis, evolving `ρ̃`
/// element-wise in the joint eigenbasis and rotating back with `W`.
pub fn propagate_density(spec: &SystemSpec, rho0: &CMatrix, t: f64) -> CMatrix {
    let w = spec.basis_map();
    let (lambda, gamma) = (spec.lambda(), spec.gamma());
    let mut rho = w * rho0 * w.adjoint();
    for mu in 0..spec.dim() {
        for nu in 0..spec.dim() {
            let omega = lambda[mu] - lambda[nu];
            let rate = 0.5 * (gamma[mu] - gamma[nu]).powi(2);
            rho[(mu, nu)] *= C64::new(0.0, -omega * t).exp() * (-rate * t).exp();
        }
    }
    w.adjoint() * rho * w
}
