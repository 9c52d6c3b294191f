use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::basis::{basis_count, evaluate_raw};
use super::ortho::orthogonalize_reduced;
use crate::error::{Error, Result};
use crate::model::{BasisKind, TransitionParams};
use crate::simulator::TraceSet;

/// Smallest bracket value passed to the logarithm; perfect fits saturate here.
pub const BRACKET_FLOOR: f64 = 1e-300;

/// Base-10 log marginal posterior of `(ω, Γ)` and its per-trace parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorValue {
    pub logp: f64,
    /// Summand for each trace in `(k, ℓ)` row-major order; zero for
    /// degenerate traces.
    pub per_trace_terms: Vec<f64>,
    /// Traces with `⟨d²⟩ = 0`, excluded from the sum.
    pub degenerate_traces: Vec<(usize, usize)>,
    /// Traces whose bracket hit [`BRACKET_FLOOR`].
    pub saturated_traces: Vec<(usize, usize)>,
    /// Number of orthonormal functions actually used.
    pub effective_basis: usize,
}

/// Reusable evaluator holding per-trace data norms.
///
/// For each trace with `N_t` samples and `m_b` orthonormal functions,
///
/// ```text
/// log10 P = (m_b − N_t)/2 · Σ_kℓ log10[1 − m_b⟨h²_kℓ⟩ / (N_t⟨d²_kℓ⟩)]
/// ```
///
/// which is the Student-t form obtained after integrating out the linear
/// amplitudes (uniform prior in orthonormal coordinates) and the per-trace
/// noise level (Jeffreys prior).
#[derive(Debug, Clone)]
pub struct PosteriorEvaluator<'a> {
    traces: &'a TraceSet,
    kind: BasisKind,
    data_norms: Vec<f64>,
    /// `N_t × N²` matrix with one trace per column.
    data: DMatrix<f64>,
}

impl<'a> PosteriorEvaluator<'a> {
    pub fn new(traces: &'a TraceSet, kind: BasisKind) -> Result<Self> {
        let data_norms: Vec<f64> =
            traces.traces().map(|(_, d)| d.iter().map(|x| x * x).sum()).collect();
        if data_norms.iter().all(|&s| s == 0.0) {
            return Err(Error::DegenerateData);
        }
        let nt = traces.n_times();
        let mut data = DMatrix::zeros(nt, data_norms.len());
        for (i, (_, d)) in traces.traces().enumerate() {
            data.column_mut(i).copy_from_slice(d);
        }
        Ok(Self { traces, kind, data_norms, data })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn traces(&self) -> &TraceSet {
        self.traces
    }

    /// Evaluate at raw `(ω, Γ)` slices; ordering and sign are not checked so
    /// optimizer excursions can be scored.
    pub fn evaluate_raw(&self, omega: &[f64], damping: &[f64]) -> Result<PosteriorValue> {
        let nt = self.traces.n_times();
        let mb = basis_count(self.kind, omega.len());
        if mb >= nt {
            return Err(Error::InvalidArgument(format!("{mb} basis functions for {nt} samples")));
        }
        let g = evaluate_raw(self.kind, omega, damping, self.traces.times());
        let proj = orthogonalize_reduced(&g)?;
        let m_eff = proj.rank();
        let exponent = (m_eff as f64 - nt as f64) / 2.0;
        let dim = self.traces.dim();

        let mut value = PosteriorValue {
            logp: 0.0,
            per_trace_terms: vec![0.0; dim * dim],
            degenerate_traces: Vec::new(),
            saturated_traces: Vec::new(),
            effective_basis: m_eff,
        };
        let h = proj.h_matrix() * &self.data;
        // ‖d − Hᵀh‖² equals ⟨d²⟩N − ⟨h²⟩m_b but keeps its relative precision
        // when the fit is nearly perfect
        let resid = &self.data - proj.h_matrix().tr_mul(&h);
        for (i, ((k, l), _)) in self.traces.traces().enumerate() {
            let d_norm = self.data_norms[i];
            if d_norm == 0.0 {
                value.degenerate_traces.push((k, l));
                continue;
            }
            let mut bracket = resid.column(i).norm_squared() / d_norm;
            if !(bracket > BRACKET_FLOOR) {
                bracket = BRACKET_FLOOR;
                value.saturated_traces.push((k, l));
            }
            let term = exponent * bracket.log10();
            value.per_trace_terms[i] = term;
            value.logp += term;
        }
        Ok(value)
    }

    pub fn evaluate(&self, params: &TransitionParams) -> Result<PosteriorValue> {
        self.evaluate_raw(&params.omega, &params.damping)
    }
}

/// Marginal log posterior of `params` given `traces`.
pub fn log_posterior(
    params: &TransitionParams,
    kind: BasisKind,
    traces: &TraceSet,
) -> Result<PosteriorValue> {
    PosteriorEvaluator::new(traces, kind)?.evaluate(params)
}
