use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{exact_probability, transition_params_from_spec, SystemSpec};

/// How many repetitions back each sampled point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Strategy {
    /// No projection noise: the recorded value is the exact probability.
    Infinite,
    /// A fixed number of repetitions per point.
    Fixed { repetitions: u32 },
    /// Smallest repetition count giving `min_ℓ p ≥ target/√N_e`, capped.
    Adaptive { target: f64, max_repetitions: u32 },
}

impl Strategy {
    pub const N1000: Strategy = Strategy::Fixed { repetitions: 1000 };
    pub const VAR: Strategy = Strategy::Adaptive { target: 10.0, max_repetitions: 10_000 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            Strategy::Infinite => Ok(()),
            Strategy::Fixed { repetitions } if repetitions >= 1 => Ok(()),
            Strategy::Adaptive { target, max_repetitions } if target > 0.0 && max_repetitions >= 1 => {
                Ok(())
            }
            _ => Err(Error::InvalidArgument(format!("invalid sampling strategy {self:?}"))),
        }
    }

    /// Short label used in file names and table headers.
    pub fn label(&self) -> String {
        match *self {
            Strategy::Infinite => "inf".into(),
            Strategy::Fixed { repetitions } => format!("{repetitions}"),
            Strategy::Adaptive { .. } => "var".into(),
        }
    }
}

/// Sample times plus the noise strategy and the seed of the trace RNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub times: Vec<f64>,
    pub strategy: Strategy,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn new(times: Vec<f64>, strategy: Strategy, seed: u64) -> Result<Self> {
        let plan = Self { times, strategy, seed };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        if self.times.is_empty() {
            return Err(Error::InvalidArgument("empty time grid".into()));
        }
        if !(self.times[0] >= 0.0) || self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("times must be nonnegative and strictly ascending".into()));
        }
        Ok(())
    }
}

/// Uniform stroboscopic grid `t_n = n·Δt`, `n = 1…N_t`.
///
/// The spacing starts at `2π/(κ·ω_max)`. If the slowest coherence decays
/// (to `e^{−decay_multiple}`) before `N_t` such steps, the total duration is
/// shortened to `decay_multiple/Γ_min` and `Δt` shrinks so the grid keeps
/// `N_t` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeGridConfig {
    pub n_samples: usize,
    pub oversampling: f64,
    pub decay_multiple: f64,
    /// Override for the largest transition frequency; defaults to the truth.
    pub omega_max: Option<f64>,
    /// Override for the smallest damping rate; defaults to the truth.
    pub gamma_min: Option<f64>,
}

impl Default for TimeGridConfig {
    fn default() -> Self {
        Self { n_samples: 500, oversampling: 2.5, decay_multiple: 3.0, omega_max: None, gamma_min: None }
    }
}

impl TimeGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 || !(self.oversampling > 0.0) || !(self.decay_multiple > 0.0) {
            return Err(Error::Config(format!("invalid time grid {self:?}")));
        }
        Ok(())
    }

    pub fn spacing_and_duration(&self, omega_max: f64, gamma_min: f64) -> (f64, f64) {
        let full_dt = TAU / (self.oversampling * omega_max);
        let full = self.n_samples as f64 * full_dt;
        let duration = if gamma_min > 0.0 { (self.decay_multiple / gamma_min).min(full) } else { full };
        (duration / self.n_samples as f64, duration)
    }

    pub fn times(&self, omega_max: f64, gamma_min: f64) -> Vec<f64> {
        let (dt, _) = self.spacing_and_duration(omega_max, gamma_min);
        (1..=self.n_samples).map(|n| n as f64 * dt).collect()
    }

    /// Grid for a given ground-truth system (guesses default to the truth).
    pub fn times_for(&self, spec: &SystemSpec) -> Result<Vec<f64>> {
        let (params, _) = transition_params_from_spec(spec)?;
        let omega_max = self.omega_max.unwrap_or(params.omega[params.omega.len() - 1]);
        let gamma_min = self.gamma_min.unwrap_or_else(|| {
            params.damping.iter().copied().filter(|&g| g > 0.0).fold(f64::INFINITY, f64::min)
        });
        let gamma_min = if gamma_min.is_finite() { gamma_min } else { 0.0 };
        Ok(self.times(omega_max, gamma_min))
    }
}

/// Smallest `N_e ≤ max` with `envelope ≥ target/√N_e`; `max` when no such
/// count exists.
pub fn repetitions_for_envelope(envelope: f64, target: f64, max: u32) -> u32 {
    if !(envelope > 0.0) {
        return max;
    }
    let needed = (target / envelope).powi(2);
    if !(needed <= max as f64) {
        return max;
    }
    let mut n = (needed.ceil() as u32).max(1);
    // guard the ceiling against rounding in (target/envelope)²
    while n > 1 && envelope >= target / ((n - 1) as f64).sqrt() {
        n -= 1;
    }
    while n < max && envelope < target / (n as f64).sqrt() {
        n += 1;
    }
    n
}

/// Repetition counts indexed `[k][n]` for adaptive sampling, using the
/// noiseless model probability as the signal envelope.
pub fn resolve_adaptive_repetitions(
    spec: &SystemSpec,
    times: &[f64],
    target: f64,
    max_repetitions: u32,
) -> Vec<Vec<u32>> {
    let dim = spec.dim();
    (0..dim)
        .map(|k| {
            times
                .iter()
                .map(|&t| {
                    let envelope = (0..dim)
                        .map(|l| exact_probability(spec, k, l, t))
                        .fold(f64::INFINITY, f64::min);
                    repetitions_for_envelope(envelope, target, max_repetitions)
                })
                .collect()
        })
        .collect()
}
