//! Exact forward model of an N-level system with dephasing in the
//! Hamiltonian eigenbasis.
//!
//! `H` and the dephasing operator `V` are diagonal in a common basis
//! `{|e_ν⟩}` with eigenvalues `λ_ν` and `γ_ν`. In that frame every coherence
//! `ρ̃_{μν}` rotates at `ω_{μν} = λ_μ − λ_ν` and decays at
//! `Γ_{μν} = ½(γ_μ − γ_ν)²`, so the whole evolution is analytic. The unitary
//! `W` maps the measurement basis to the eigenbasis, `ρ(t) = W† ρ̃(t) W`.

mod forward;
mod spec;

pub use forward::{
    exact_coefficients, exact_probability, overlaps, propagate_density, transition_params_from_spec,
};
pub use spec::{SystemSpec, SystemSpecFile, DEGENERACY_TOLERANCE, UNITARITY_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Transition frequencies and their damping rates, sorted by frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams {
    pub omega: Vec<f64>,
    #[serde(rename = "Gamma")]
    pub damping: Vec<f64>,
}

impl TransitionParams {
    /// Validating constructor: frequencies strictly positive and strictly
    /// ascending, damping rates nonnegative.
    pub fn new(omega: Vec<f64>, damping: Vec<f64>) -> Result<Self> {
        if omega.len() != damping.len() {
            return Err(Error::InvalidArgument(format!(
                "{} frequencies but {} damping rates",
                omega.len(),
                damping.len()
            )));
        }
        if omega.is_empty() {
            return Err(Error::InvalidArgument("no transitions".into()));
        }
        if omega.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument("frequencies must be positive".into()));
        }
        if omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("frequencies must be strictly ascending".into()));
        }
        if damping.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidArgument("damping rates must be nonnegative".into()));
        }
        Ok(Self { omega, damping })
    }

    /// Build from unordered `(ω, Γ)` pairs, sorting by frequency. Does not
    /// reject ties; use [`TransitionParams::new`] when validation matters.
    pub fn sorted_from_pairs(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (omega, damping) = pairs.into_iter().unzip();
        Self { omega, damping }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn is_undamped(&self) -> bool {
        self.damping.iter().all(|&g| g == 0.0)
    }

    /// Per-transition quality factors `ω/Γ`; `None` where `Γ = 0`.
    pub fn q_factors(&self) -> Vec<Option<f64>> {
        self.omega
            .iter()
            .zip(&self.damping)
            .map(|(&w, &g)| (g > 0.0).then(|| w / g))
            .collect()
    }

    /// Geometric mean of the finite Q-factors, `None` for an undamped system.
    pub fn geometric_mean_q(&self) -> Option<f64> {
        let logs: Vec<f64> = self.q_factors().into_iter().flatten().map(f64::ln).collect();
        if logs.is_empty() {
            None
        } else {
            Some((logs.iter().sum::<f64>() / logs.len() as f64).exp())
        }
    }
}

/// Maps the flat transition index `m` to the eigenlevel pair `(μ, ν)`,
/// `μ < ν`, that produces it (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionIndexMap {
    pub pairs: Vec<(usize, usize)>,
}

impl TransitionIndexMap {
    pub fn index_of(&self, mu: usize, nu: usize) -> Option<usize> {
        let key = if mu < nu { (mu, nu) } else { (nu, mu) };
        self.pairs.iter().position(|&p| p == key)
    }
}

/// Which family of damped-sinusoid basis functions a fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// Damped cosines and sines for every transition plus a constant.
    General,
    /// Damped cosines only plus a constant (real-symmetric Hamiltonians).
    RealSymmetric,
}

/// Linear coefficients of every population trace,
///
/// ```text
/// p_kℓ(t) = c_kℓ + 2 Σ_m e^{−Γ_m t} [a_kℓ;m cos(ω_m t) + b_kℓ;m sin(ω_m t)]
/// ```
///
/// stored flat in `(k, ℓ, m)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalCoefficients {
    pub dim: usize,
    pub n_transitions: usize,
    pub kind: BasisKind,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl SignalCoefficients {
    pub fn zeros(dim: usize, n_transitions: usize, kind: BasisKind) -> Self {
        Self {
            dim,
            n_transitions,
            kind,
            a: vec![0.0; dim * dim * n_transitions],
            b: vec![0.0; dim * dim * n_transitions],
            c: vec![0.0; dim * dim],
        }
    }

    fn idx(&self, k: usize, l: usize, m: usize) -> usize {
        (k * self.dim + l) * self.n_transitions + m
    }

    pub fn a(&self, k: usize, l: usize, m: usize) -> f64 {
        self.a[self.idx(k, l, m)]
    }

    pub fn b(&self, k: usize, l: usize, m: usize) -> f64 {
        self.b[self.idx(k, l, m)]
    }

    pub fn c(&self, k: usize, l: usize) -> f64 {
        self.c[k * self.dim + l]
    }

    pub fn set(&mut self, k: usize, l: usize, m: usize, a: f64, b: f64) {
        let i = self.idx(k, l, m);
        self.a[i] = a;
        self.b[i] = b;
    }

    pub fn set_c(&mut self, k: usize, l: usize, c: f64) {
        self.c[k * self.dim + l] = c;
    }

    /// Evaluate the expansion for trace `(k, ℓ)` at time `t`.
    pub fn evaluate(&self, params: &TransitionParams, k: usize, l: usize, t: f64) -> f64 {
        let mut p = self.c(k, l);
        for m in 0..self.n_transitions {
            let env = (-params.damping[m] * t).exp();
            let (s, c) = (params.omega[m] * t).sin_cos();
            p += 2.0 * env * (self.a(k, l, m) * c + self.b(k, l, m) * s);
        }
        p
    }
}
