//! Marginal posterior of transition frequencies and damping rates, its
//! multi-start maximization, and extraction of the linear coefficients.
//!
//! The linear amplitudes and the per-trace noise level are integrated out
//! analytically, leaving a function of `(ω, Γ)` alone that depends on the
//! data only through projections onto an orthonormalized damped-sinusoid
//! basis.

mod basis;
mod bfgs;
mod fit;
mod ortho;
mod posterior;
mod spectrum;

pub use basis::{basis_count, evaluate_basis, BasisFamily};
pub use bfgs::{central_gradient, minimize, BfgsOptions, BfgsOutcome, Termination};
pub use fit::{
    estimate, extract_coefficients, maximize_posterior, residual_seed, DampingModel, Estimate, EstimationReport,
    FitOptions, PosteriorFit, RestartRecord, GAMMA_FLOOR,
};
pub use ortho::{orthogonalize, orthogonalize_reduced, OrthoProjection, RETENTION_TOLERANCE};
pub use posterior::{log_posterior, PosteriorEvaluator, PosteriorValue, BRACKET_FLOOR};
pub use spectrum::{seed_frequencies, summed_power_spectrum, Peak, PowerSpectrum, SeedOptions};
