use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::basis::{basis_count, evaluate_raw};
use super::bfgs::{central_gradient, minimize, BfgsOptions, Termination};
use super::ortho::{orthogonalize, orthogonalize_reduced};
use super::posterior::{PosteriorEvaluator, PosteriorValue};
use super::spectrum::{seed_frequencies, summed_power_spectrum, SeedOptions};
use crate::error::{Error, Result};
use crate::model::{BasisKind, SignalCoefficients, TransitionParams};
use crate::simulator::TraceSet;

/// Smallest damping rate the log parameterization can reach.
pub const GAMMA_FLOOR: f64 = 1e-12;

/// Whether the fit includes damping rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingModel {
    /// Free `Γ_m ≥ 0` for every transition.
    Free,
    /// Purely Hamiltonian model, `Γ ≡ 0`.
    Undamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Random damping initializations per frequency seed.
    pub n_restarts: usize,
    pub damping: DampingModel,
    /// Initial `Γ` is log-uniform over this range times the median seed
    /// frequency.
    pub gamma_init_range: (f64, f64),
    /// Relative step of the central-difference gradient.
    pub gradient_step: f64,
    pub bfgs: BfgsOptions,
    pub seeding: SeedOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_restarts: 8,
            damping: DampingModel::Free,
            gamma_init_range: (1e-3, 1e-1),
            gradient_step: 1e-7,
            bfgs: BfgsOptions::default(),
            seeding: SeedOptions::default(),
        }
    }
}

/// Audit record of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub seed_index: usize,
    pub restart: usize,
    pub initial_omega: Vec<f64>,
    #[serde(rename = "initial_Gamma")]
    pub initial_damping: Vec<f64>,
    /// Terminal log posterior, absent when the run failed.
    pub terminal_logp: Option<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Failure reason, absent for valid runs.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFit {
    pub params: TransitionParams,
    pub posterior: PosteriorValue,
    pub restarts: Vec<RestartRecord>,
    pub best_restart: usize,
}

/// Multi-start quasi-Newton ascent of the log posterior.
///
/// Each frequency seed is combined with `n_restarts` random damping
/// initializations. The search runs over `x = (ω·T, ln Γ)` with `T` the
/// last sample time, so both blocks are of order one per natural bin and
/// per e-fold. The run with the highest terminal log posterior wins.
pub fn maximize_posterior<R: Rng + ?Sized>(
    traces: &TraceSet,
    m: usize,
    kind: BasisKind,
    seeds: &[Vec<f64>],
    options: &FitOptions,
    rng: &mut R,
) -> Result<PosteriorFit> {
    if seeds.is_empty() || options.n_restarts == 0 {
        return Err(Error::InvalidArgument("need at least one seed and one restart".into()));
    }
    if let Some(bad) = seeds.iter().find(|s| s.len() != m) {
        return Err(Error::InvalidArgument(format!("seed {bad:?} does not have {m} frequencies")));
    }
    let (lo, hi) = options.gamma_init_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidArgument("invalid damping initialization range".into()));
    }
    let evaluator = PosteriorEvaluator::new(traces, kind)?;
    let scale = *traces.times().last().ok_or(Error::InvalidArgument("empty time grid".into()))?;
    let free = options.damping == DampingModel::Free;
    let full_basis = basis_count(kind, m);

    let split = |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let omega = x[..m].iter().map(|v| v / scale).collect();
        let damping = if free {
            x[m..].iter().map(|v| v.exp().max(GAMMA_FLOOR)).collect()
        } else {
            vec![0.0; m]
        };
        (omega, damping)
    };
    let objective = |x: &[f64]| -> f64 {
        let (omega, damping) = split(x);
        match evaluator.evaluate_raw(&omega, &damping) {
            Ok(v) => -v.logp,
            Err(_) => f64::NAN,
        }
    };

    let mut restarts = Vec::new();
    let mut best: Option<(usize, TransitionParams, PosteriorValue)> = None;
    let mut any_progress = false;
    for (seed_index, seed) in seeds.iter().enumerate() {
        let mut sorted = seed.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[m / 2];
        for restart in 0..options.n_restarts {
            let initial_damping: Vec<f64> = if free {
                (0..m).map(|_| median * (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp()).collect()
            } else {
                vec![0.0; m]
            };
            let mut x0: Vec<f64> = seed.iter().map(|w| w * scale).collect();
            if free {
                x0.extend(initial_damping.iter().map(|g| g.ln()));
            }
            let mut f = objective;
            let fg = |x: &[f64]| (f(x), central_gradient(&mut f, x, options.gradient_step));
            let out = minimize(fg, &x0, &options.bfgs);

            let mut record = RestartRecord {
                seed_index,
                restart,
                initial_omega: seed.clone(),
                initial_damping,
                terminal_logp: None,
                iterations: out.iterations,
                termination: out.termination,
                failure: None,
            };
            let stalled = out.termination == Termination::LineSearchFailed && !out.made_progress();
            let outcome = if !out.f.is_finite() {
                Err("non-finite posterior".to_string())
            } else {
                let (omega, damping) = split(&out.x);
                TransitionParams::new(omega.clone(), damping.clone())
                    .or_else(|_| {
                        let p = TransitionParams::sorted_from_pairs(omega.into_iter().zip(damping).collect());
                        TransitionParams::new(p.omega, p.damping)
                    })
                    .map_err(|e| e.to_string())
                    .and_then(|p| evaluator.evaluate(&p).map(|v| (p, v)).map_err(|e| e.to_string()))
                    .and_then(|(p, v)| {
                        // collapsed lines leave coefficients unidentifiable
                        if v.effective_basis < full_basis {
                            Err(format!("basis rank {} of {full_basis} at optimum", v.effective_basis))
                        } else {
                            Ok((p, v))
                        }
                    })
            };
            match outcome {
                Ok((params, value)) => {
                    record.terminal_logp = Some(value.logp);
                    if stalled {
                        // still scored: a start at the optimum cannot progress
                        record.failure = Some("line search made no progress".into());
                    } else {
                        any_progress = true;
                    }
                    if best.as_ref().is_none_or(|b| value.logp > b.2.logp) {
                        best = Some((restarts.len(), params, value));
                    }
                }
                Err(reason) => record.failure = Some(reason),
            }
            restarts.push(record);
        }
    }
    match best {
        Some((best_restart, params, posterior)) if any_progress => {
            Ok(PosteriorFit { params, posterior, restarts, best_restart })
        }
        _ => Err(Error::OptimizerDiverged(restarts.len())),
    }
}

/// Posterior-mean linear coefficients of every trace at `params`.
///
/// The basis coefficients are `x = E diag(α^{-1/2}) h`; because the
/// expansion carries a factor 2 on the oscillating terms, `a = x_cos/2`,
/// `b = x_sin/2` and `c` is the constant coefficient.
pub fn extract_coefficients(
    params: &TransitionParams,
    kind: BasisKind,
    traces: &TraceSet,
) -> Result<SignalCoefficients> {
    let m = params.len();
    let g = evaluate_raw(kind, &params.omega, &params.damping, traces.times());
    let proj = orthogonalize(&g)?;
    let mut out = SignalCoefficients::zeros(traces.dim(), m, kind);
    for ((k, l), d) in traces.traces() {
        let x = proj.coefficients(&proj.project(d));
        for j in 0..m {
            match kind {
                BasisKind::General => out.set(k, l, j, 0.5 * x[2 * j], 0.5 * x[2 * j + 1]),
                BasisKind::RealSymmetric => out.set(k, l, j, 0.5 * x[j], 0.0),
            }
        }
        out.set_c(k, l, x[x.len() - 1]);
    }
    Ok(out)
}

/// Frequency seed built one line at a time from residual periodograms.
///
/// The strongest peak of the summed periodogram is fitted (with every line
/// found so far) by a single quasi-Newton run, the least-squares model is
/// subtracted from the data, and the next line is the strongest peak of the
/// residual spectrum at least the minimum separation away from the lines
/// already found. Subtracting the fitted lines removes their truncation
/// sidelobes, which otherwise hide broad, strongly damped lines. Returns
/// `None` if fewer than `m` lines emerge.
pub fn residual_seed(
    traces: &TraceSet,
    m: usize,
    kind: BasisKind,
    options: &FitOptions,
) -> Result<Option<Vec<f64>>> {
    let mut lines = residual_lines(traces, m, kind, options)?;
    if lines.len() < m {
        return Ok(None);
    }
    lines.sort_by(f64::total_cmp);
    let distinct = lines.windows(2).all(|w| w[1] > w[0]) && lines[0] > 0.0;
    Ok(distinct.then_some(lines))
}

/// Lines of [`residual_seed`] in the order they were found (possibly fewer
/// than `m`).
fn residual_lines(traces: &TraceSet, m: usize, kind: BasisKind, options: &FitOptions) -> Result<Vec<f64>> {
    let evaluator = PosteriorEvaluator::new(traces, kind)?;
    let scale = *traces.times().last().ok_or(Error::InvalidArgument("empty time grid".into()))?;
    let free = options.damping == DampingModel::Free;
    let mut omega: Vec<f64> = Vec::new();
    let mut damping: Vec<f64> = Vec::new();
    let mut residual = traces.clone();
    for _ in 0..m {
        let spectrum = summed_power_spectrum(&residual, options.seeding.zero_padding)?;
        let min_sep = options.seeding.min_separation_bins * spectrum.natural_bin;
        let next = spectrum
            .peaks(&SeedOptions { relative_threshold: 0.0, ..options.seeding.clone() })
            .into_iter()
            .find(|p| omega.iter().all(|w| (w - p.omega).abs() >= min_sep));
        let Some(peak) = next else { break };
        omega.push(peak.omega);
        damping.push(if free { spectrum.natural_bin } else { 0.0 });
        let j = omega.len();

        let mut x0: Vec<f64> = omega.iter().map(|w| w * scale).collect();
        if free {
            x0.extend(damping.iter().map(|g| g.max(GAMMA_FLOOR).ln()));
        }
        let f = |x: &[f64]| -> f64 {
            let w: Vec<f64> = x[..j].iter().map(|v| v / scale).collect();
            let g: Vec<f64> =
                if free { x[j..].iter().map(|v| v.exp().max(GAMMA_FLOOR)).collect() } else { vec![0.0; j] };
            evaluator.evaluate_raw(&w, &g).map(|v| -v.logp).unwrap_or(f64::NAN)
        };
        let fg = |x: &[f64]| (f(x), central_gradient(&mut f.clone(), x, options.gradient_step));
        let out = minimize(fg, &x0, &options.bfgs);
        if out.f.is_finite() {
            omega = out.x[..j].iter().map(|v| v / scale).collect();
            if free {
                damping = out.x[j..].iter().map(|v| v.exp().max(GAMMA_FLOOR)).collect();
            }
        }

        let g = evaluate_raw(kind, &omega, &damping, traces.times());
        let proj = orthogonalize_reduced(&g)?;
        let mut d = Vec::with_capacity(traces.n_traces() * traces.n_times());
        for (_, tr) in traces.traces() {
            let fitted = proj.h_matrix().tr_mul(&proj.project(tr));
            d.extend(tr.iter().zip(fitted.iter()).map(|(x, y)| x - y));
        }
        residual = TraceSet::new(traces.dim(), traces.times().to_vec(), d, vec![0; traces.dim() * traces.n_times()])?;
    }
    Ok(omega)
}

/// Qutrit candidates completing two lines `p`, `q` by the level relation:
/// the third line is either `|p − q|` or `p + q`.
fn qutrit_completions(p: f64, q: f64) -> Vec<Vec<f64>> {
    let (lo, hi) = if p < q { (p, q) } else { (q, p) };
    let mut out = vec![vec![lo, hi, lo + hi]];
    if hi - lo > 0.0 && hi - lo != lo {
        let mut c = vec![hi - lo, lo, hi];
        c.sort_by(f64::total_cmp);
        out.push(c);
    }
    out
}

/// Complete estimation of one trace set.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub fit: PosteriorFit,
    pub coefficients: SignalCoefficients,
    pub seeds: Vec<Vec<f64>>,
}

/// Periodogram seeding, posterior maximization and coefficient extraction.
///
/// The candidates of [`seed_frequencies`] are supplemented by the
/// [`residual_seed`] candidate and, for three transitions, by completing the
/// two strongest residual lines with their sum or difference.
pub fn estimate<R: Rng + ?Sized>(
    traces: &TraceSet,
    m: usize,
    kind: BasisKind,
    options: &FitOptions,
    rng: &mut R,
) -> Result<Estimate> {
    let mut seeds = seed_frequencies(traces, m, &options.seeding)?;
    let lines = residual_lines(traces, m, kind, options)?;
    if lines.len() == m {
        let mut sorted = lines.clone();
        sorted.sort_by(f64::total_cmp);
        seeds.push(sorted);
    }
    if m == 3 && lines.len() >= 2 {
        seeds.extend(qutrit_completions(lines[0], lines[1]));
    }
    seeds.retain(|s| s.windows(2).all(|w| w[1] > w[0]) && s[0] > 0.0);
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    for s in seeds {
        let same = |t: &Vec<f64>| s.iter().zip(t).all(|(x, y)| (x - y).abs() <= 1e-6 * x.abs().max(y.abs()));
        if !distinct.iter().any(same) {
            distinct.push(s);
        }
    }
    let seeds = distinct;
    if seeds.is_empty() {
        return Err(Error::NoPeaks);
    }
    let fit = maximize_posterior(traces, m, kind, &seeds, options, rng)?;
    let coefficients = extract_coefficients(&fit.params, kind, traces)?;
    Ok(Estimate { fit, coefficients, seeds })
}

/// JSON form of an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub dim: usize,
    pub kind: BasisKind,
    pub omega: Vec<f64>,
    #[serde(rename = "Gamma")]
    pub damping: Vec<f64>,
    pub logp: f64,
    /// Per-trace coefficients, outer index `k·N + ℓ`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub saturated_traces: Vec<(usize, usize)>,
    pub degenerate_traces: Vec<(usize, usize)>,
    pub seeds: Vec<Vec<f64>>,
    pub best_restart: usize,
    pub restart_log: Vec<RestartRecord>,
}

impl EstimationReport {
    pub fn from_estimate(e: &Estimate) -> Self {
        let c = &e.coefficients;
        let m = c.n_transitions.max(1);
        Self {
            dim: c.dim,
            kind: c.kind,
            omega: e.fit.params.omega.clone(),
            damping: e.fit.params.damping.clone(),
            logp: e.fit.posterior.logp,
            a: c.a.chunks(m).map(<[f64]>::to_vec).collect(),
            b: c.b.chunks(m).map(<[f64]>::to_vec).collect(),
            c: c.c.clone(),
            saturated_traces: e.fit.posterior.saturated_traces.clone(),
            degenerate_traces: e.fit.posterior.degenerate_traces.clone(),
            seeds: e.seeds.clone(),
            best_restart: e.fit.best_restart,
            restart_log: e.fit.restarts.clone(),
        }
    }

    pub fn params(&self) -> Result<TransitionParams> {
        TransitionParams::new(self.omega.clone(), self.damping.clone())
    }

    pub fn coefficients(&self) -> Result<SignalCoefficients> {
        let n2 = self.dim * self.dim;
        let m = self.omega.len();
        if self.a.len() != n2 || self.b.len() != n2 || self.c.len() != n2 {
            return Err(Error::InvalidArgument("coefficient arrays do not match dimension".into()));
        }
        if self.a.iter().chain(&self.b).any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("coefficient rows do not match transitions".into()));
        }
        Ok(SignalCoefficients {
            dim: self.dim,
            n_transitions: m,
            kind: self.kind,
            a: self.a.concat(),
            b: self.b.concat(),
            c: self.c.clone(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
