use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{transition_params_from_spec, CMatrix, SystemSpec, C64};

/// Random benchmark-system generator.
///
/// Eigenvalues are uniform on `[0, 1]`, rescaled so the largest transition
/// frequency is 1. The eigenbasis is Haar-distributed over O(N) or U(N). A
/// random dephasing direction is then scaled so that the geometric mean of
/// the per-transition Q-factors `ω_m/Γ_m` equals a target drawn
/// log-uniformly from `[q_min, q_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemGenerator {
    pub dim: usize,
    pub q_min: f64,
    pub q_max: f64,
    pub real_symmetric: bool,
    /// Minimum separation between any two transition frequencies (and of the
    /// smallest frequency from zero), as a fraction of the largest.
    pub min_gap_ratio: f64,
    /// Fix the diagonal gauge so the Hamiltonian's first row is real and
    /// nonnegative; for qutrits also require `Re H_12 ≥ 0`. Traces cannot
    /// tell `H` from `−H*`, and this is the sign convention the
    /// reconstruction uses to pick between them.
    pub positive_offdiag: bool,
    pub max_attempts: usize,
}

impl Default for SystemGenerator {
    fn default() -> Self {
        Self {
            dim: 3,
            q_min: 12.0,
            q_max: 72.0,
            real_symmetric: true,
            min_gap_ratio: 0.05,
            positive_offdiag: true,
            max_attempts: 10_000,
        }
    }
}

impl SystemGenerator {
    pub fn new(dim: usize, q_min: f64, q_max: f64, real_symmetric: bool) -> Self {
        Self { dim, q_min, q_max, real_symmetric, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidArgument(format!("dimension {} < 2", self.dim)));
        }
        if !(self.q_min > 0.0 && self.q_min <= self.q_max && self.q_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid Q range [{}, {}]",
                self.q_min, self.q_max
            )));
        }
        Ok(())
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SystemSpec> {
        self.validate()?;
        for _ in 0..self.max_attempts {
            if let Some(spec) = self.attempt(rng)? {
                return Ok(spec);
            }
        }
        Err(Error::RejectionExhausted(self.max_attempts))
    }

    fn attempt<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Option<SystemSpec>> {
        let n = self.dim;
        let mut lambda: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        lambda.sort_by(f64::total_cmp);
        let span = lambda[n - 1] - lambda[0];
        if span <= 0.0 {
            return Ok(None);
        }
        let lambda: Vec<f64> = lambda.iter().map(|l| (l - lambda[0]) / span).collect();

        let mut w = haar_basis_map(n, self.real_symmetric, rng);
        if self.positive_offdiag && !fix_offdiag_gauge(&lambda, &mut w, self.real_symmetric) {
            return Ok(None);
        }

        let direction: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mean = direction.iter().sum::<f64>() / n as f64;
        let direction: Vec<f64> = direction.iter().map(|g| g - mean).collect();

        let unit = SystemSpec::new(lambda.clone(), direction, w.clone(), self.real_symmetric)?;
        let (params, _) = match transition_params_from_spec(&unit) {
            Ok(p) => p,
            Err(Error::DegenerateSpectrum(..)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let omega_max = params.omega[params.omega.len() - 1];
        let mut gaps = vec![params.omega[0]];
        gaps.extend(params.omega.windows(2).map(|w| w[1] - w[0]));
        if gaps.iter().any(|&g| g < self.min_gap_ratio * omega_max) {
            return Ok(None);
        }
        // Γ scales as s², so Q_geo scales as 1/s²
        let q_unit = match params.geometric_mean_q() {
            Some(q) if q.is_finite() && params.damping.iter().all(|&g| g > 0.0) => q,
            _ => return Ok(None),
        };
        let target = if self.q_min == self.q_max {
            self.q_min
        } else {
            (rng.random_range(self.q_min.ln()..self.q_max.ln())).exp()
        };
        let scale = (q_unit / target).sqrt();
        let gamma = unit.gamma().iter().map(|g| g * scale).collect();
        Ok(Some(SystemSpec::new(lambda, gamma, w, self.real_symmetric)?))
    }
}

/// Haar-uniform orthogonal (real) or unitary matrix via QR of a Gaussian
/// matrix with the phases of `diag(R)` divided out.
pub fn haar_basis_map<R: Rng + ?Sized>(n: usize, real: bool, rng: &mut R) -> CMatrix {
    let mut sample = || rng.sample::<f64, _>(StandardNormal);
    let z: DMatrix<C64> = if real {
        DMatrix::from_fn(n, n, |_, _| C64::new(sample(), 0.0))
    } else {
        DMatrix::from_fn(n, n, |_, _| C64::new(sample(), sample()) / 2f64.sqrt())
    };
    let qr = z.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    if real {
        // strip the exact zeros' sign noise
        q.iter_mut().for_each(|v| v.im = 0.0);
    }
    q
}

/// Multiply `W` on the right by a diagonal unitary so the Hamiltonian's first
/// row becomes real and nonnegative. For qutrits returns `false` when the
/// remaining off-diagonal element has a negative real part.
fn fix_offdiag_gauge(lambda: &[f64], w: &mut CMatrix, real: bool) -> bool {
    let n = lambda.len();
    let diag = CMatrix::from_diagonal(&DVector::from_iterator(
        n,
        lambda.iter().map(|&x| C64::new(x, 0.0)),
    ));
    let h = w.adjoint() * &diag * &*w;
    let mut d = vec![C64::new(1.0, 0.0); n];
    for l in 1..n {
        let e = h[(0, l)];
        if e.norm() > 0.0 {
            d[l] = (e / e.norm()).conj();
        }
        if real {
            d[l] = C64::new(d[l].re.signum(), 0.0);
        }
    }
    for j in 0..n {
        for i in 0..n {
            w[(i, j)] *= d[j];
        }
    }
    if real {
        w.iter_mut().for_each(|v| v.im = 0.0);
    }
    if n == 3 {
        let h = w.adjoint() * &diag * &*w;
        return h[(1, 2)].re >= 0.0;
    }
    true
}

/// Convenience wrapper over [`SystemGenerator`] with default admissibility
/// settings.
pub fn generate_random_system<R: Rng + ?Sized>(
    dim: usize,
    q_min: f64,
    q_max: f64,
    real_symmetric: bool,
    rng: &mut R,
) -> Result<SystemSpec> {
    SystemGenerator::new(dim, q_min, q_max, real_symmetric).generate(rng)
}
