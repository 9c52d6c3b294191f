use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CMatrix, C64};
use crate::error::{Error, Result};

/// Maximum deviation of `W†W` from the identity accepted for a basis map.
pub const UNITARITY_TOLERANCE: f64 = 1e-12;

/// Two transition frequencies closer than this fraction of the largest one
/// are treated as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-6;

/// Ground-truth description of an N-level system.
///
/// Eigenvalues are kept in ascending `λ` order; the rows of `basis_map`
/// follow the same order, so row `ν` of `W` is `⟨e_ν|` written in the
/// measurement basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    dim: usize,
    lambda: Vec<f64>,
    gamma: Vec<f64>,
    basis_map: CMatrix,
    real_symmetric: bool,
}

impl SystemSpec {
    pub fn new(
        lambda: Vec<f64>,
        gamma: Vec<f64>,
        basis_map: CMatrix,
        real_symmetric: bool,
    ) -> Result<Self> {
        let dim = lambda.len();
        if dim < 2 {
            return Err(Error::InvalidSpec(format!("dimension {dim} < 2")));
        }
        if gamma.len() != dim {
            return Err(Error::InvalidSpec(format!(
                "{} dephasing eigenvalues for dimension {dim}",
                gamma.len()
            )));
        }
        if basis_map.nrows() != dim || basis_map.ncols() != dim {
            return Err(Error::InvalidSpec(format!(
                "basis map is {}x{}, expected {dim}x{dim}",
                basis_map.nrows(),
                basis_map.ncols()
            )));
        }
        if lambda.iter().chain(&gamma).any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec("non-finite eigenvalue".into()));
        }
        let defect = (basis_map.adjoint() * &basis_map - CMatrix::identity(dim, dim))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if defect > UNITARITY_TOLERANCE {
            return Err(Error::InvalidSpec(format!("basis map not unitary (defect {defect:.2e})")));
        }
        if real_symmetric && basis_map.iter().any(|z| z.im != 0.0) {
            return Err(Error::InvalidSpec("real-symmetric system with complex basis map".into()));
        }

        // sort levels by λ, carrying γ and the rows of W along
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&i, &j| lambda[i].total_cmp(&lambda[j]));
        let lambda = order.iter().map(|&i| lambda[i]).collect();
        let gamma = order.iter().map(|&i| gamma[i]).collect();
        let basis_map = CMatrix::from_fn(dim, dim, |r, c| basis_map[(order[r], c)]);

        Ok(Self { dim, lambda, gamma, basis_map, real_symmetric })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn basis_map(&self) -> &CMatrix {
        &self.basis_map
    }

    pub fn is_real_symmetric(&self) -> bool {
        self.real_symmetric
    }

    /// True when every dephasing rate vanishes (γ constant).
    pub fn is_hamiltonian_only(&self) -> bool {
        self.gamma.iter().all(|&g| g == self.gamma[0])
    }

    /// Number of level pairs, `N(N−1)/2`.
    pub fn n_transitions(&self) -> usize {
        self.dim * (self.dim - 1) / 2
    }

    /// True if two transition frequencies coincide within
    /// [`DEGENERACY_TOLERANCE`] of the largest.
    pub fn is_degenerate(&self) -> bool {
        super::transition_params_from_spec(self).is_err()
    }

    /// Same system with the dephasing switched off.
    pub fn without_dephasing(&self) -> Self {
        Self { gamma: vec![0.0; self.dim], ..self.clone() }
    }

    /// Same system with every eigenvalue shifted by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self { lambda: self.lambda.iter().map(|l| l + shift).collect(), ..self.clone() }
    }

    /// Same system with `γ` replaced (levels keep their order).
    pub fn with_gamma(&self, gamma: Vec<f64>) -> Result<Self> {
        Self::new(self.lambda.clone(), gamma, self.basis_map.clone(), self.real_symmetric)
    }

    /// Joint eigenvector `|ξ_ν⟩` in the measurement basis (column `ν` of `W†`).
    pub fn eigenvector(&self, nu: usize) -> nalgebra::DVector<C64> {
        self.basis_map.row(nu).adjoint()
    }

    /// `H = W† diag(λ) W` in the measurement basis.
    pub fn hamiltonian(&self) -> CMatrix {
        self.diagonal_operator(&self.lambda)
    }

    /// `V = W† diag(γ) W` in the measurement basis.
    pub fn dephasing_operator(&self) -> CMatrix {
        self.diagonal_operator(&self.gamma)
    }

    fn diagonal_operator(&self, diag: &[f64]) -> CMatrix {
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim,
            diag.iter().map(|&x| C64::new(x, 0.0)),
        ));
        self.basis_map.adjoint() * d * &self.basis_map
    }

    pub fn to_file(&self) -> SystemSpecFile {
        SystemSpecFile {
            dim: self.dim,
            lambda: self.lambda.clone(),
            gamma: self.gamma.clone(),
            basis_map: self.basis_map.transpose().iter().map(|z| [z.re, z.im]).collect(),
            real_symmetric: self.real_symmetric,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<SystemSpecFile>(s)?.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the serialized JSON document (as written by [`save`]).
    ///
    /// [`save`]: SystemSpec::save
    pub fn sha256(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest((self.to_json()? + "\n").as_bytes())))
    }
}

/// On-disk form: `basis_map` is row-major `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpecFile {
    pub dim: usize,
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
    pub basis_map: Vec<[f64; 2]>,
    pub real_symmetric: bool,
}

impl TryFrom<SystemSpecFile> for SystemSpec {
    type Error = Error;

    fn try_from(f: SystemSpecFile) -> Result<Self> {
        if f.lambda.len() != f.dim || f.basis_map.len() != f.dim * f.dim {
            return Err(Error::InvalidSpec("field lengths disagree with dim".into()));
        }
        let w = CMatrix::from_row_iterator(
            f.dim,
            f.dim,
            f.basis_map.iter().map(|&[re, im]| C64::new(re, im)),
        );
        SystemSpec::new(f.lambda, f.gamma, w, f.real_symmetric)
    }
}
