use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Arm, BenchmarkConfig};
use super::stats::median;
use super::table::emit_table;
use crate::error::{Error, Result};
use crate::estimator::{estimate, DampingModel, EstimationReport, FitOptions};
use crate::model::{transition_params_from_spec, BasisKind, SystemSpec};
use crate::reconstructor::{compute_error_metrics, reconstruct, ReconstructOptions, ReconstructionResult};
use crate::rng;
use crate::simulator::{synthesize_traces, SamplingPlan, SystemGenerator, TraceSet, TraceSidecar};

/// Outcome of one system in one arm. Flat so it maps onto one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRecord {
    pub system: usize,
    pub arm: String,
    pub spec_sha256: String,
    pub config_sha256: String,
    pub seed: u64,
    /// Geometric-mean Q of the dephasing system.
    pub q_geo: Option<f64>,
    /// `ok`, `gauge_unfixable` (best-effort result kept) or a failure code.
    pub status: String,
    pub reason: Option<String>,
    pub logp: Option<f64>,
    pub eps_omega: Option<f64>,
    #[serde(rename = "eps_Gamma")]
    pub eps_gamma: Option<f64>,
    pub eps_a: Option<f64>,
    #[serde(rename = "eps_S")]
    pub eps_s: Option<f64>,
    #[serde(rename = "eps_H")]
    pub eps_h: Option<f64>,
}

impl SystemRecord {
    /// Completed reconstructions, including flagged best-effort gauges.
    pub fn succeeded(&self) -> bool {
        self.eps_h.is_some()
    }
}

/// Median of each table quantity over the successful systems of an arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Medians {
    pub logp: Option<f64>,
    pub eps_omega: Option<f64>,
    #[serde(rename = "eps_Gamma")]
    pub eps_gamma: Option<f64>,
    pub eps_a: Option<f64>,
    #[serde(rename = "eps_S")]
    pub eps_s: Option<f64>,
    #[serde(rename = "eps_H")]
    pub eps_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub heading: String,
    pub n_systems: usize,
    pub n_succeeded: usize,
    pub n_failed: usize,
    pub n_gauge_unfixable: usize,
    /// Failure count per reason code.
    pub failures: BTreeMap<String, usize>,
    pub medians: Medians,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config_sha256: String,
    /// The configuration without output location or worker count.
    pub config: BenchmarkConfig,
    pub arms: Vec<ArmSummary>,
    pub records: Vec<SystemRecord>,
}

impl BenchmarkReport {
    pub fn n_failed(&self) -> usize {
        self.arms.iter().map(|a| a.n_failed).sum()
    }

    pub fn arm(&self, label: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == label)
    }

    /// Records of one arm, in system order.
    pub fn records_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a SystemRecord> + 'a {
        self.records.iter().filter(move |r| r.arm == label)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Wall-clock time of one pipeline run; kept out of the report so reports
/// stay byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub system: usize,
    pub arm: String,
    pub seconds: f64,
}

/// Everything one arm of one system produced.
#[derive(Debug, Clone)]
pub struct ArmRun {
    pub record: SystemRecord,
    pub traces: Option<(TraceSet, TraceSidecar)>,
    pub estimate: Option<EstimationReport>,
    pub reconstruction: Option<ReconstructionResult>,
    pub seconds: f64,
}

/// Ground-truth system `index` of a benchmark; identical for every arm.
pub fn system_spec(config: &BenchmarkConfig, index: usize) -> Result<SystemSpec> {
    let generator = SystemGenerator::new(config.dim, config.q_range.0, config.q_range.1, config.real_symmetric);
    generator.generate(&mut rng::stream(config.seed, &["system".into(), index.into()]))
}

/// Seed of the trace noise. Shared by the dephasing and Hamiltonian-only arms
/// of a strategy so that paired arms see the same noise draws.
pub fn trace_seed(config: &BenchmarkConfig, index: usize, arm: &Arm) -> u64 {
    rng::child_seed(config.seed, &["traces".into(), index.into(), arm.strategy.label().as_str().into()])
}

fn failed_record(base: SystemRecord, error: &Error) -> SystemRecord {
    SystemRecord { status: error.code().into(), reason: Some(error.to_string()), ..base }
}

/// Simulate, estimate, reconstruct and score one arm of one system.
///
/// `spec` is the dephasing ground truth; Hamiltonian-only arms drop its
/// dephasing but keep its time grid.
pub fn run_arm(config: &BenchmarkConfig, index: usize, spec: &SystemSpec, arm: &Arm) -> Result<ArmRun> {
    let started = Instant::now();
    let base = SystemRecord {
        system: index,
        arm: arm.label(),
        spec_sha256: spec.sha256()?,
        config_sha256: config.sha256()?,
        seed: config.seed,
        q_geo: transition_params_from_spec(spec).ok().and_then(|(p, _)| p.geometric_mean_q()),
        status: "ok".into(),
        reason: None,
        logp: None,
        eps_omega: None,
        eps_gamma: None,
        eps_a: None,
        eps_s: None,
        eps_h: None,
    };
    let mut run = ArmRun { record: base.clone(), traces: None, estimate: None, reconstruction: None, seconds: 0.0 };

    let truth = if arm.with_dephasing { spec.clone() } else { spec.without_dephasing() };
    let times = config.time_grid.times_for(spec)?;
    let duration = *times.last().expect("time grid has at least two points");
    let plan = SamplingPlan::new(times, arm.strategy, trace_seed(config, index, arm))?;
    let traces = synthesize_traces(&truth, &plan)?;
    run.traces = Some((traces.clone(), TraceSidecar { plan, spec_sha256: truth.sha256()? }));

    let kind = if config.real_symmetric { BasisKind::RealSymmetric } else { BasisKind::General };
    let damping = if arm.with_dephasing { DampingModel::Free } else { DampingModel::Undamped };
    let fit_options = FitOptions { damping, ..config.fit.clone() };
    let m = truth.n_transitions();
    let label = arm.label();
    let mut est_rng = rng::stream(config.seed, &["estimate".into(), index.into(), label.as_str().into()]);
    let est = match estimate(&traces, m, kind, &fit_options, &mut est_rng) {
        Ok(e) => e,
        Err(e) => {
            run.record = failed_record(base, &e);
            run.seconds = started.elapsed().as_secs_f64();
            return Ok(run);
        }
    };
    run.record.logp = Some(est.fit.posterior.logp);
    run.estimate = Some(EstimationReport::from_estimate(&est));

    let options = ReconstructOptions { overlap: config.overlap.clone(), ..Default::default() };
    let mut rec_rng = rng::stream(config.seed, &["reconstruct".into(), index.into(), label.as_str().into()]);
    let (mut result, status) =
        match reconstruct(&est.fit.params, &est.coefficients, kind, duration, &options, &mut rec_rng) {
            Ok(r) => (r, "ok"),
            Err(Error::GaugeUnfixable { best_effort, .. }) => (*best_effort, "gauge_unfixable"),
            Err(e) => {
                run.record = SystemRecord { logp: run.record.logp, ..failed_record(base, &e) };
                run.seconds = started.elapsed().as_secs_f64();
                return Ok(run);
            }
        };
    let metrics = compute_error_metrics(&truth, &est.fit.params, &est.coefficients, &result, arm.with_dephasing)?;
    run.record.status = status.into();
    run.record.eps_omega = Some(metrics.eps_omega);
    run.record.eps_gamma = metrics.eps_gamma;
    run.record.eps_a = Some(metrics.eps_a);
    run.record.eps_s = Some(metrics.eps_s);
    run.record.eps_h = Some(metrics.eps_h);
    result.metrics = Some(metrics);
    run.reconstruction = Some(result);
    run.seconds = started.elapsed().as_secs_f64();
    Ok(run)
}

/// Re-run one arm of one system from a (possibly persisted) ground truth.
pub fn rerun_system(config: &BenchmarkConfig, index: usize, spec: &SystemSpec, arm: &Arm) -> Result<SystemRecord> {
    Ok(run_arm(config, index, spec, arm)?.record)
}

/// Per-arm counts and medians, in the configured arm order.
pub fn summarize(arms: &[Arm], records: &[SystemRecord]) -> Vec<ArmSummary> {
    let mut arms = arms.to_vec();
    arms.sort_by_key(Arm::sort_key);
    arms.iter()
        .map(|arm| {
            let label = arm.label();
            let rows: Vec<&SystemRecord> = records.iter().filter(|r| r.arm == label).collect();
            let ok: Vec<&SystemRecord> = rows.iter().copied().filter(|r| r.succeeded()).collect();
            let mut failures = BTreeMap::new();
            for r in rows.iter().filter(|r| !r.succeeded()) {
                *failures.entry(r.status.clone()).or_insert(0) += 1;
            }
            let column = |f: fn(&SystemRecord) -> Option<f64>| median(ok.iter().filter_map(|r| f(r)).collect());
            ArmSummary {
                arm: label,
                heading: arm.heading(),
                n_systems: rows.len(),
                n_succeeded: ok.len(),
                n_failed: rows.len() - ok.len(),
                n_gauge_unfixable: ok.iter().filter(|r| r.status == "gauge_unfixable").count(),
                failures,
                medians: Medians {
                    logp: column(|r| r.logp),
                    eps_omega: column(|r| r.eps_omega),
                    eps_gamma: if arm.with_dephasing { column(|r| r.eps_gamma) } else { None },
                    eps_a: column(|r| r.eps_a),
                    eps_s: column(|r| r.eps_s),
                    eps_h: column(|r| r.eps_h),
                },
            }
        })
        .collect()
}

fn persist_system(dir: &Path, index: usize, spec: &SystemSpec, runs: &[ArmRun]) -> Result<()> {
    let sys_dir = dir.join("systems").join(format!("{index:03}"));
    std::fs::create_dir_all(&sys_dir)?;
    spec.save(sys_dir.join("spec.json"))?;
    for run in runs {
        let arm_dir = sys_dir.join(&run.record.arm);
        std::fs::create_dir_all(&arm_dir)?;
        if let Some((traces, sidecar)) = &run.traces {
            traces.write_csv(arm_dir.join("traces.csv"))?;
            sidecar.save(arm_dir.join("traces.json"))?;
        }
        if let Some(e) = &run.estimate {
            e.save(arm_dir.join("estimate.json"))?;
        }
        if let Some(r) = &run.reconstruction {
            r.save(arm_dir.join("reconstruction.json"))?;
        }
    }
    Ok(())
}

/// Write per-system records as CSV, one row per system and arm.
pub fn write_records_csv(records: &[SystemRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<SystemRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Run every configured arm on every system.
///
/// Systems are distributed over a worker pool; records come back in system
/// order, so the report does not depend on scheduling. With an output
/// directory, every artifact plus `report.json`, `records.csv`, `table.txt`,
/// `table.csv` and `timings.csv` is written there.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    run_benchmark_timed(config).map(|(report, _)| report)
}

/// [`run_benchmark`] that also returns the wall-clock timings.
pub fn run_benchmark_timed(config: &BenchmarkConfig) -> Result<(BenchmarkReport, Vec<Timing>)> {
    config.validate()?;
    let config_sha256 = config.sha256()?;
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut arms = config.arms.clone();
    arms.sort_by_key(Arm::sort_key);

    let per_system: Vec<Result<Vec<(SystemRecord, f64)>>> = pool.install(|| {
        (0..config.n_systems)
            .into_par_iter()
            .map(|index| {
                let spec = match system_spec(config, index) {
                    Ok(s) => s,
                    Err(e) => {
                        let rows = arms
                            .iter()
                            .map(|arm| {
                                let r = SystemRecord {
                                    system: index,
                                    arm: arm.label(),
                                    spec_sha256: String::new(),
                                    config_sha256: config_sha256.clone(),
                                    seed: config.seed,
                                    q_geo: None,
                                    status: e.code().into(),
                                    reason: Some(e.to_string()),
                                    logp: None,
                                    eps_omega: None,
                                    eps_gamma: None,
                                    eps_a: None,
                                    eps_s: None,
                                    eps_h: None,
                                };
                                (r, 0.0)
                            })
                            .collect();
                        return Ok(rows);
                    }
                };
                let runs: Vec<ArmRun> = arms.iter().map(|arm| run_arm(config, index, &spec, arm)).collect::<Result<_>>()?;
                if let Some(dir) = &config.output_dir {
                    persist_system(dir, index, &spec, &runs)?;
                }
                Ok(runs.into_iter().map(|r| (r.record, r.seconds)).collect())
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut timings = Vec::new();
    for rows in per_system {
        for (record, seconds) in rows? {
            timings.push(Timing { system: record.system, arm: record.arm.clone(), seconds });
            records.push(record);
        }
    }
    let mut stored = config.clone();
    stored.output_dir = None;
    stored.jobs = None;
    let report = BenchmarkReport { config_sha256, arms: summarize(&arms, &records), config: stored, records };

    if let Some(dir) = &config.output_dir {
        report.save(dir.join("report.json"))?;
        write_records_csv(&report.records, dir.join("records.csv"))?;
        let table = emit_table(&report)?;
        std::fs::write(dir.join("table.txt"), &table.text)?;
        std::fs::write(dir.join("table.csv"), &table.csv)?;
        let mut w = csv::Writer::from_path(dir.join("timings.csv"))?;
        for t in &timings {
            w.serialize(t)?;
        }
        w.flush()?;
    }
    Ok((report, timings))
}
