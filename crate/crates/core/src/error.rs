use thiserror::Error;

use crate::reconstructor::ReconstructionResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate spectrum: transition frequencies {0} and {1} coincide")]
    DegenerateSpectrum(f64, f64),

    #[error("no admissible system found after {0} attempts")]
    RejectionExhausted(usize),

    #[error("basis is rank deficient: retained {retained} of {requested} functions")]
    RankDeficientBasis { retained: usize, requested: usize },

    #[error("all traces are identically zero")]
    DegenerateData,

    #[error("summed power spectrum has no usable peaks")]
    NoPeaks,

    #[error("time grid is not uniform")]
    NonUniformGrid,

    #[error("optimizer failed to make progress in all {0} restarts")]
    OptimizerDiverged(usize),

    #[error("no frequency sum relation holds within tolerance {0}")]
    InconsistentFrequencies(f64),

    #[error("{0} frequency sum relations hold within tolerance")]
    AmbiguousStructure(usize),

    #[error("overlap fit exceeded residual bound in all {0} runs")]
    FitDiverged(usize),

    #[error("off-diagonal sign pattern cannot be made nonnegative (worst entry {worst:.3e})")]
    GaugeUnfixable {
        worst: f64,
        best_effort: Box<ReconstructionResult>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable reason code used in benchmark records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DegenerateSpectrum(..) => "degenerate_spectrum",
            Error::RejectionExhausted(_) => "rejection_exhausted",
            Error::RankDeficientBasis { .. } => "rank_deficient_basis",
            Error::DegenerateData => "degenerate_data",
            Error::NoPeaks => "no_peaks",
            Error::NonUniformGrid => "non_uniform_grid",
            Error::OptimizerDiverged(_) => "optimizer_diverged",
            Error::InconsistentFrequencies(_) => "inconsistent_frequencies",
            Error::AmbiguousStructure(_) => "ambiguous_structure",
            Error::FitDiverged(_) => "fit_diverged",
            Error::GaugeUnfixable { .. } => "gauge_unfixable",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
