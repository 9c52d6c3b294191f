//! From estimated frequencies and coefficients to a Hamiltonian: level
//! structure, overlap fits, eigenprojectors, gauge fixing and error metrics.

mod assemble;
mod levels;
mod metrics;
mod overlaps;

pub use assemble::{assemble_hamiltonian, closest_projector, GaugeConvention};
pub use levels::{infer_level_structure, level_tolerance, LevelStructure};
pub use metrics::{compute_error_metrics, hamiltonian_error, ErrorMetrics, GAMMA_NORM_FLOOR};
pub use overlaps::{basis_error, fit_overlaps, OverlapOptions, ProjectorSet};

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BasisKind, CMatrix, SignalCoefficients, TransitionParams, C64};

/// How the gauge representative was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeRecord {
    pub convention: GaugeConvention,
    /// The free global shift is fixed by `λ̂_0 = lambda_0`.
    pub lambda_0: f64,
    /// Diagonal phases of `D`.
    pub phases: Vec<f64>,
    /// Whether the convention could be met.
    pub fixed: bool,
    /// Smallest real part of an off-diagonal element after fixing.
    pub worst_offdiag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    /// Rows of `Ĥ` as `[re, im]` pairs.
    #[serde(rename = "H_hat", with = "cmatrix_rows")]
    pub h_hat: CMatrix,
    pub lambda_hat: Vec<f64>,
    pub structure: LevelStructure,
    #[serde(rename = "S_error")]
    pub s_error: f64,
    pub run_errors: Vec<Option<f64>>,
    pub chosen_run: usize,
    pub gauge: GaugeRecord,
    pub metrics: Option<ErrorMetrics>,
}

impl ReconstructionResult {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

mod cmatrix_rows {
    use super::{CMatrix, C64};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> =
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("H_hat must be square"));
        }
        Ok(CMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructOptions {
    /// Tolerance on the frequency sum relation; defaults to
    /// [`level_tolerance`] of the record length.
    pub tolerance: Option<f64>,
    pub overlap: OverlapOptions,
    /// Defaults to real-positive off-diagonals for real-symmetric fits.
    pub convention: Option<GaugeConvention>,
    /// Also try the mirrored ladder and keep the better labeling.
    pub try_mirror: bool,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self { tolerance: None, overlap: OverlapOptions::default(), convention: None, try_mirror: true }
    }
}

/// Level structure, overlap fit and Hamiltonian assembly.
///
/// A qutrit ladder and its mirror image explain the same frequencies and,
/// since `H` and `−H*` produce identical traces, the same coefficients. The
/// labeling whose gauge-fixed off-diagonal elements have the larger minimum
/// real part is kept, which selects the member with nonnegative off-diagonal
/// real parts.
pub fn reconstruct<R: Rng + ?Sized>(
    params: &TransitionParams,
    coeffs: &SignalCoefficients,
    kind: BasisKind,
    duration: f64,
    options: &ReconstructOptions,
    rng: &mut R,
) -> Result<ReconstructionResult> {
    let tol = options.tolerance.unwrap_or_else(|| level_tolerance(duration));
    let structure = infer_level_structure(&params.omega, tol)?;
    let convention = options.convention.unwrap_or(match kind {
        BasisKind::RealSymmetric => GaugeConvention::RealPositiveOffdiag,
        BasisKind::General => GaugeConvention::PhaseFree,
    });
    let mut candidates = vec![structure.clone()];
    if options.try_mirror {
        candidates.extend(structure.mirror());
    }
    let mut first_error = None;
    let mut outcomes: Vec<ReconstructionResult> = Vec::new();
    for s in &candidates {
        let attempt = fit_overlaps(coeffs, s, kind, &options.overlap, rng)
            .and_then(|set| assemble_hamiltonian(s, &set, convention));
        match attempt {
            Ok(r) => outcomes.push(r),
            Err(Error::GaugeUnfixable { best_effort, .. }) => outcomes.push(*best_effort),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let better = |a: &ReconstructionResult, b: &ReconstructionResult| {
        (a.gauge.fixed, a.gauge.worst_offdiag) > (b.gauge.fixed, b.gauge.worst_offdiag)
    };
    let mut chosen: Option<ReconstructionResult> = None;
    for r in outcomes {
        if chosen.as_ref().is_none_or(|c| better(&r, c)) {
            chosen = Some(r);
        }
    }
    match chosen {
        Some(r) if r.gauge.fixed => Ok(r),
        Some(r) => Err(Error::GaugeUnfixable { worst: r.gauge.worst_offdiag, best_effort: Box::new(r) }),
        None => Err(first_error.unwrap_or(Error::FitDiverged(options.overlap.n_runs))),
    }
}
