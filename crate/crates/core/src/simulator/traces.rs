use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::sampling::{resolve_adaptive_repetitions, SamplingPlan, Strategy};
use crate::error::{Error, Result};
use crate::model::{exact_probability, SystemSpec};
use crate::rng;

/// Measured relative frequencies `d_{kℓ;n}` for all `N²` traces.
///
/// `repetitions[k][n]` is the number of repetitions behind point `n` of
/// initial state `k`; zero marks noiseless (exact) data.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    dim: usize,
    times: Vec<f64>,
    d: Vec<f64>,
    repetitions: Vec<u32>,
}

impl TraceSet {
    pub fn new(dim: usize, times: Vec<f64>, d: Vec<f64>, repetitions: Vec<u32>) -> Result<Self> {
        let nt = times.len();
        if d.len() != dim * dim * nt || repetitions.len() != dim * nt {
            return Err(Error::InvalidArgument("trace array sizes disagree".into()));
        }
        Ok(Self { dim, times, d, repetitions })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_traces(&self) -> usize {
        self.dim * self.dim
    }

    /// Samples of trace `(k, ℓ)`.
    pub fn trace(&self, k: usize, l: usize) -> &[f64] {
        let nt = self.times.len();
        let start = (k * self.dim + l) * nt;
        &self.d[start..start + nt]
    }

    /// Traces in `(k, ℓ)` row-major order.
    pub fn traces(&self) -> impl Iterator<Item = ((usize, usize), &[f64])> {
        let nt = self.times.len();
        self.d.chunks(nt).enumerate().map(move |(i, tr)| ((i / self.dim, i % self.dim), tr))
    }

    pub fn value(&self, k: usize, l: usize, n: usize) -> f64 {
        self.d[(k * self.dim + l) * self.times.len() + n]
    }

    pub fn repetitions(&self, k: usize, n: usize) -> u32 {
        self.repetitions[k * self.times.len() + n]
    }

    /// Uniform spacing of the grid, if it has one (relative tolerance 1e-9).
    pub fn uniform_spacing(&self) -> Option<f64> {
        let t = &self.times;
        if t.len() < 2 {
            return None;
        }
        let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        let ok = t.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt);
        ok.then_some(dt)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "ell", "n", "t", "d", "Ne"])?;
        for k in 0..self.dim {
            for l in 0..self.dim {
                for (n, &t) in self.times.iter().enumerate() {
                    w.write_record(&[
                        k.to_string(),
                        l.to_string(),
                        n.to_string(),
                        format!("{t:e}"),
                        format!("{:e}", self.value(k, l, n)),
                        self.repetitions(k, n).to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            k: usize,
            ell: usize,
            n: usize,
            t: f64,
            d: f64,
            #[serde(rename = "Ne")]
            ne: u32,
        }
        let mut rows = Vec::new();
        for r in csv::Reader::from_path(path)?.deserialize() {
            let r: Row = r?;
            rows.push(r);
        }
        let dim = rows.iter().map(|r| r.k.max(r.ell) + 1).max().unwrap_or(0);
        let nt = rows.iter().map(|r| r.n + 1).max().unwrap_or(0);
        if dim == 0 || rows.len() != dim * dim * nt {
            return Err(Error::InvalidArgument("trace CSV is incomplete".into()));
        }
        let mut times = vec![f64::NAN; nt];
        let mut d = vec![f64::NAN; dim * dim * nt];
        let mut reps = vec![0; dim * nt];
        for r in rows {
            times[r.n] = r.t;
            d[(r.k * dim + r.ell) * nt + r.n] = r.d;
            reps[r.k * nt + r.n] = r.ne;
        }
        if d.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidArgument("trace CSV has duplicate rows".into()));
        }
        Self::new(dim, times, d, reps)
    }
}

/// Provenance record stored next to a trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub plan: SamplingPlan,
    pub spec_sha256: String,
}

impl TraceSidecar {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// One multinomial draw of `n` trials over `probs` by sequential binomial
/// decomposition.
pub fn multinomial<R: Rng + ?Sized>(n: u32, probs: &[f64], rng: &mut R) -> Vec<u32> {
    let probs: Vec<f64> = probs.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    let mut mass: f64 = probs.iter().sum();
    let mut left = n as u64;
    let mut counts = vec![0u32; probs.len()];
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() {
            counts[i] = left as u32;
            break;
        }
        if left == 0 {
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let x = Binomial::new(left, q).map(|b| b.sample(rng)).unwrap_or(0);
        counts[i] = x as u32;
        left -= x;
        mass -= p;
    }
    counts
}

/// Sample every trace on the plan's grid.
///
/// Each initial state `k` draws from its own stream `(plan.seed, k)`.
pub fn synthesize_traces(spec: &SystemSpec, plan: &SamplingPlan) -> Result<TraceSet> {
    plan.validate()?;
    let dim = spec.dim();
    let nt = plan.times.len();
    let reps: Vec<Vec<u32>> = match plan.strategy {
        Strategy::Infinite => vec![vec![0; nt]; dim],
        Strategy::Fixed { repetitions } => vec![vec![repetitions; nt]; dim],
        Strategy::Adaptive { target, max_repetitions } => {
            resolve_adaptive_repetitions(spec, &plan.times, target, max_repetitions)
        }
    };
    let mut d = vec![0.0; dim * dim * nt];
    for k in 0..dim {
        let mut rng = rng::stream(plan.seed, &["traces".into(), k.into()]);
        for (n, &t) in plan.times.iter().enumerate() {
            let probs: Vec<f64> = (0..dim).map(|l| exact_probability(spec, k, l, t)).collect();
            let ne = reps[k][n];
            let values: Vec<f64> = if ne == 0 {
                probs
            } else {
                multinomial(ne, &probs, &mut rng).iter().map(|&c| c as f64 / ne as f64).collect()
            };
            for (l, v) in values.into_iter().enumerate() {
                d[(k * dim + l) * nt + n] = v;
            }
        }
    }
    TraceSet::new(dim, plan.times.clone(), d, reps.concat())
}
