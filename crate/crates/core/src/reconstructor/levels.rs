use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assignment of transition frequencies to eigenlevel pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStructure {
    /// Level pair `(μ, ν)`, `μ < ν`, of each transition index `m`.
    pub assignment: Vec<(usize, usize)>,
    /// Ascending reconstructed eigenvalues with `λ̂_0 = 0`.
    pub lambda_hat: Vec<f64>,
}

impl LevelStructure {
    pub fn dim(&self) -> usize {
        self.lambda_hat.len()
    }

    /// Transition index of level pair `(μ, ν)` in either order.
    pub fn transition_of(&self, mu: usize, nu: usize) -> Option<usize> {
        let key = if mu < nu { (mu, nu) } else { (nu, mu) };
        self.assignment.iter().position(|&p| p == key)
    }

    /// The reflected qutrit ladder with the two gaps swapped.
    ///
    /// For real-symmetric systems `H` and `−H` produce identical traces, and
    /// `−H` has exactly this structure, so both labelings fit the data.
    pub fn mirror(&self) -> Option<Self> {
        if self.dim() != 3 {
            return None;
        }
        let l = &self.lambda_hat;
        let (lo, hi) = (l[1] - l[0], l[2] - l[1]);
        let m01 = self.transition_of(0, 1)?;
        let m12 = self.transition_of(1, 2)?;
        let m02 = self.transition_of(0, 2)?;
        let mut assignment = vec![(0, 0); 3];
        assignment[m12] = (0, 1);
        assignment[m01] = (1, 2);
        assignment[m02] = (0, 2);
        Some(Self { assignment, lambda_hat: vec![0.0, hi, hi + lo] })
    }
}

/// Default tolerance on `ω_c = ω_a + ω_b`: five times half a natural
/// periodogram bin of a record of length `duration`.
pub fn level_tolerance(duration: f64) -> f64 {
    5.0 * 0.5 * std::f64::consts::TAU / duration
}

/// Qutrit level structure from three ascending transition frequencies.
///
/// Looks for every relation `ω_c = ω_a + ω_b` with distinct indices within
/// `tol`; exactly one must hold. With `a` the smaller gap, the eigenvalues are
/// `(0, ω_a, ω_a + ω_b)`.
pub fn infer_level_structure(omega: &[f64], tol: f64) -> Result<LevelStructure> {
    if omega.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "level-structure inference needs 3 transitions, got {}",
            omega.len()
        )));
    }
    let mut relations = Vec::new();
    for c in 0..3 {
        for a in 0..3 {
            for b in a + 1..3 {
                if a != c && b != c && (omega[c] - omega[a] - omega[b]).abs() <= tol {
                    relations.push((a, b, c));
                }
            }
        }
    }
    match relations.len() {
        0 => Err(Error::InconsistentFrequencies(tol)),
        1 => {
            let (a, b, c) = relations[0];
            let (a, b) = if omega[a] <= omega[b] { (a, b) } else { (b, a) };
            let mut assignment = vec![(0, 0); 3];
            assignment[a] = (0, 1);
            assignment[b] = (1, 2);
            assignment[c] = (0, 2);
            Ok(LevelStructure { assignment, lambda_hat: vec![0.0, omega[a], omega[a] + omega[b]] })
        }
        n => Err(Error::AmbiguousStructure(n)),
    }
}
