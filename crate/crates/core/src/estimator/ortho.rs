use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues of the Gram matrix below this fraction of the largest are
/// dropped from the orthonormal set.
pub const RETENTION_TOLERANCE: f64 = 1e-12;

/// Orthonormal model functions derived from a sampled basis `g` via the
/// eigendecomposition `G e_m = α_m e_m` of `G = g gᵀ`:
///
/// ```text
/// H_m(t_n) = α_m^{-1/2} Σ_{m'} e_{m'm} g_{m'}(t_n)
/// ```
#[derive(Debug, Clone)]
pub struct OrthoProjection {
    gram: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    retained: Vec<usize>,
    /// `r × m_b` map from basis rows to orthonormal rows, `H = T g`.
    transform: DMatrix<f64>,
    /// `r × N_t` orthonormal rows.
    h_matrix: DMatrix<f64>,
}

impl OrthoProjection {
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Indices of the eigenpairs kept.
    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn rank(&self) -> usize {
        self.retained.len()
    }

    pub fn requested(&self) -> usize {
        self.gram.nrows()
    }

    pub fn h_matrix(&self) -> &DMatrix<f64> {
        &self.h_matrix
    }

    /// Projections `h_m = Σ_n H_m(t_n) d_n` of one trace.
    pub fn project(&self, data: &[f64]) -> DVector<f64> {
        &self.h_matrix * DVector::from_column_slice(data)
    }

    /// Least-squares coefficients of the original basis functions,
    /// `x = E diag(α^{-1/2}) h`.
    pub fn coefficients(&self, h: &DVector<f64>) -> DVector<f64> {
        self.transform.transpose() * h
    }

    /// Largest deviation of `H Hᵀ` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        orthonormality_defect(&self.h_matrix)
    }

    /// Errors with [`Error::RankDeficientBasis`] unless every function was kept.
    pub fn require_full_rank(self) -> Result<Self> {
        if self.rank() < self.requested() {
            return Err(Error::RankDeficientBasis { retained: self.rank(), requested: self.requested() });
        }
        Ok(self)
    }
}

fn orthonormality_defect(h: &DMatrix<f64>) -> f64 {
    let gram = h * h.transpose();
    let r = gram.nrows();
    (gram - DMatrix::identity(r, r)).amax()
}

/// Orthonormalize, erroring if any function had to be dropped.
pub fn orthogonalize(g: &DMatrix<f64>) -> Result<OrthoProjection> {
    orthogonalize_reduced(g)?.require_full_rank()
}

/// Orthonormalize, silently dropping numerically null directions (the
/// dimension-reduced form used while searching parameter space).
pub fn orthogonalize_reduced(g: &DMatrix<f64>) -> Result<OrthoProjection> {
    let (mb, nt) = g.shape();
    if mb == 0 || mb >= nt {
        return Err(Error::InvalidArgument(format!(
            "{mb} basis functions need more than {nt} samples"
        )));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite basis value".into()));
    }
    let gram = g * g.transpose();
    let eig = SymmetricEigen::new(gram.clone());
    let alpha_max = eig.eigenvalues.max();
    let mut retained: Vec<usize> = (0..mb)
        .filter(|&i| alpha_max > 0.0 && eig.eigenvalues[i] >= RETENTION_TOLERANCE * alpha_max)
        .collect();
    retained.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let r = retained.len();
    let mut transform = DMatrix::zeros(r, mb);
    for (row, &i) in retained.iter().enumerate() {
        let scale = eig.eigenvalues[i].sqrt().recip();
        for j in 0..mb {
            transform[(row, j)] = scale * eig.eigenvectors[(j, i)];
        }
    }
    let mut h_matrix = &transform * g;

    // one symmetric re-orthonormalization pass for ill-conditioned G
    if r > 0 && orthonormality_defect(&h_matrix) > 1e-14 {
        let refine = SymmetricEigen::new(&h_matrix * h_matrix.transpose());
        if refine.eigenvalues.min() > 0.0 {
            let inv_sqrt = &refine.eigenvectors
                * DMatrix::from_diagonal(&refine.eigenvalues.map(|b| b.sqrt().recip()))
                * refine.eigenvectors.transpose();
            transform = &inv_sqrt * transform;
            h_matrix = &transform * g;
        }
    }

    Ok(OrthoProjection {
        gram,
        eigenvalues: eig.eigenvalues,
        eigenvectors: eig.eigenvectors,
        retained,
        transform,
        h_matrix,
    })
}
