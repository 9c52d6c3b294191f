use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::FitOptions;
use crate::reconstructor::OverlapOptions;
use crate::simulator::{Strategy, TimeGridConfig};

/// One benchmark column: a sampling strategy with or without dephasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub strategy: Strategy,
    pub with_dephasing: bool,
}

impl Arm {
    pub const fn new(strategy: Strategy, with_dephasing: bool) -> Self {
        Self { strategy, with_dephasing }
    }

    /// The six columns of the median table, in table order.
    pub fn all() -> Vec<Arm> {
        let mut arms = Vec::new();
        for s in [Strategy::Infinite, Strategy::N1000, Strategy::VAR] {
            arms.push(Arm::new(s, true));
            arms.push(Arm::new(s, false));
        }
        arms
    }

    /// Machine label, e.g. `1000` or `var_H`.
    pub fn label(&self) -> String {
        let base = self.strategy.label();
        if self.with_dephasing {
            base
        } else {
            format!("{base}_H")
        }
    }

    /// Table heading, e.g. `N_1000^H`.
    pub fn heading(&self) -> String {
        let base = match self.strategy {
            Strategy::Infinite => "N_∞".to_string(),
            Strategy::Fixed { repetitions } => format!("N_{repetitions}"),
            Strategy::Adaptive { .. } => "N_var".to_string(),
        };
        if self.with_dephasing {
            base
        } else {
            format!("{base}^H")
        }
    }

    /// Position in the canonical column order.
    pub fn sort_key(&self) -> (u8, u32, bool) {
        match self.strategy {
            Strategy::Infinite => (0, 0, !self.with_dephasing),
            Strategy::Fixed { repetitions } => (1, repetitions, !self.with_dephasing),
            Strategy::Adaptive { .. } => (2, 0, !self.with_dephasing),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses `inf`, `1000`, `var` and any fixed count `N`, each optionally
/// suffixed `_H` (case-insensitive) for the Hamiltonian-only arm.
impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (base, with_dephasing) = match s.strip_suffix("_H").or_else(|| s.strip_suffix("_h")) {
            Some(b) => (b, false),
            None => (s, true),
        };
        let strategy = match base {
            "inf" => Strategy::Infinite,
            "var" => Strategy::VAR,
            n => match n.parse::<u32>() {
                Ok(repetitions) if repetitions >= 1 => Strategy::Fixed { repetitions },
                _ => return Err(Error::Config(format!("unknown arm '{s}'"))),
            },
        };
        Ok(Arm::new(strategy, with_dephasing))
    }
}

/// Parse a comma-separated arm list.
pub fn parse_arms(list: &str) -> Result<Vec<Arm>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub n_systems: usize,
    pub dim: usize,
    pub q_range: (f64, f64),
    pub real_symmetric: bool,
    pub arms: Vec<Arm>,
    pub time_grid: TimeGridConfig,
    /// Root of every random stream.
    pub seed: u64,
    pub fit: FitOptions,
    pub overlap: OverlapOptions,
    /// Where artifacts are written; nothing is persisted when absent.
    pub output_dir: Option<PathBuf>,
    /// Worker threads; all available cores when absent.
    pub jobs: Option<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_systems: 20,
            dim: 3,
            q_range: (12.0, 72.0),
            real_symmetric: true,
            arms: Arm::all(),
            time_grid: TimeGridConfig::default(),
            seed: 20_130_701,
            fit: FitOptions::default(),
            overlap: OverlapOptions::default(),
            output_dir: None,
            jobs: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let (q_min, q_max) = self.q_range;
        if self.n_systems == 0 {
            return Err(Error::Config("n_systems must be at least 1".into()));
        }
        if self.dim != 3 {
            return Err(Error::Config(format!("level-structure inference supports dim 3 only, got {}", self.dim)));
        }
        if !(q_min > 0.0 && q_min <= q_max && q_max.is_finite()) {
            return Err(Error::Config(format!("invalid q_range ({q_min}, {q_max})")));
        }
        if self.arms.is_empty() {
            return Err(Error::Config("no arms selected".into()));
        }
        for arm in &self.arms {
            arm.strategy.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let mut labels: Vec<String> = self.arms.iter().map(Arm::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate arm".into()));
        }
        if self.fit.n_restarts == 0 || self.overlap.n_runs == 0 {
            return Err(Error::Config("n_restarts and overlap runs must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.time_grid.validate()
    }

    /// Hex SHA-256 of the configuration with the output location and worker
    /// count removed, so it identifies the computation rather than where or
    /// how fast it ran.
    pub fn sha256(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        canonical.jobs = None;
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&canonical)?)))
    }
}
