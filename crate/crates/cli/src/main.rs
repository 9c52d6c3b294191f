use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qsid::estimator::{estimate, DampingModel, EstimationReport, FitOptions};
use qsid::harness::{
    emit_table, export_spectrum, export_trace_figure_data, parse_arms, run_benchmark_timed, Arm, BenchmarkConfig,
};
use qsid::model::{BasisKind, SystemSpec};
use qsid::reconstructor::{compute_error_metrics, reconstruct, ReconstructOptions};
use qsid::rng;
use qsid::simulator::{synthesize_traces, SamplingPlan, SystemGenerator, TimeGridConfig, TraceSet, TraceSidecar};

#[derive(Parser)]
#[command(name = "qsid", version, about = "Identify dephasing qutrit dynamics from population traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random system and write it as JSON.
    Gen(GenArgs),
    /// Sample population traces of a system.
    Simulate(SimulateArgs),
    /// Estimate frequencies, damping rates and coefficients from traces.
    Estimate(EstimateArgs),
    /// Reconstruct the Hamiltonian from an estimate.
    Reconstruct(ReconstructArgs),
    /// Run the Monte-Carlo benchmark and print the median table.
    Bench(BenchArgs),
    /// Export the summed periodogram of a trace set.
    Spectrum(SpectrumArgs),
    /// Export ideal and sampled series of one trace.
    Tracefig(TracefigArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 12.0)]
    q_min: f64,
    #[arg(long, default_value_t = 72.0)]
    q_max: f64,
    /// Unitary instead of real orthogonal eigenbasis.
    #[arg(long)]
    complex: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SamplingArgs {
    /// `inf`, `var` or a fixed repetition count.
    #[arg(long, default_value = "1000")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = TimeGridConfig::default().n_samples)]
    n_samples: usize,
}

impl SamplingArgs {
    fn plan(&self, spec: &SystemSpec) -> Result<SamplingPlan> {
        let arm: Arm = self.strategy.parse()?;
        if !arm.with_dephasing {
            bail!(qsid::Error::Config("use --no-dephasing instead of an _H strategy suffix".into()));
        }
        let grid = TimeGridConfig { n_samples: self.n_samples, ..Default::default() };
        grid.validate()?;
        Ok(SamplingPlan::new(grid.times_for(spec)?, arm.strategy, self.seed)?)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Simulate the system with its dephasing removed (time grid unchanged).
    #[arg(long)]
    no_dephasing: bool,
    /// Output directory for `traces.csv` and `traces.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    traces: PathBuf,
    /// Number of transitions; N(N−1)/2 when absent.
    #[arg(long)]
    transitions: Option<usize>,
    /// Fit complex (sine and cosine) amplitudes.
    #[arg(long)]
    complex: bool,
    /// Fit a purely Hamiltonian model (no damping).
    #[arg(long)]
    undamped: bool,
    #[arg(long, default_value_t = FitOptions::default().n_restarts)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    estimate: PathBuf,
    /// Traces the estimate came from; supply the record length.
    #[arg(long)]
    traces: PathBuf,
    /// Ground truth; when given, error metrics are included.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON configuration; defaults are used for absent fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated arms, e.g. `inf,1000,1000_H,var`.
    #[arg(long)]
    arms: Option<String>,
    #[arg(long)]
    n_systems: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, default_value_t = 4)]
    zero_padding: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TracefigArgs {
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long, default_value_t = 0)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    l: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Outcome of a subcommand that completed.
enum Status {
    Success,
    PartialFailure,
}

fn write_json(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen(a: GenArgs) -> Result<Status> {
    let generator = SystemGenerator::new(a.dim, a.q_min, a.q_max, !a.complex);
    let spec = generator.generate(&mut rng::stream(a.seed, &["system".into()]))?;
    let json = spec.to_json()? + "\n";
    match a.out {
        Some(path) => write_json(&path, &json)?,
        None => print!("{json}"),
    }
    Ok(Status::Success)
}

fn simulate(a: SimulateArgs) -> Result<Status> {
    let spec = SystemSpec::load(&a.spec).with_context(|| format!("loading {}", a.spec.display()))?;
    let plan = a.sampling.plan(&spec)?;
    let truth = if a.no_dephasing { spec.without_dephasing() } else { spec };
    let traces = synthesize_traces(&truth, &plan)?;
    std::fs::create_dir_all(&a.out)?;
    traces.write_csv(a.out.join("traces.csv"))?;
    TraceSidecar { plan, spec_sha256: truth.sha256()? }.save(a.out.join("traces.json"))?;
    Ok(Status::Success)
}

fn estimate_cmd(a: EstimateArgs) -> Result<Status> {
    let traces = TraceSet::read_csv(&a.traces).with_context(|| format!("loading {}", a.traces.display()))?;
    let n = traces.dim();
    let m = a.transitions.unwrap_or(n * (n - 1) / 2);
    let kind = if a.complex { BasisKind::General } else { BasisKind::RealSymmetric };
    let damping = if a.undamped { DampingModel::Undamped } else { DampingModel::Free };
    let options = FitOptions { n_restarts: a.restarts, damping, ..Default::default() };
    let est = estimate(&traces, m, kind, &options, &mut rng::stream(a.seed, &["estimate".into()]))?;
    EstimationReport::from_estimate(&est).save(&a.out)?;
    Ok(Status::Success)
}

fn reconstruct_cmd(a: ReconstructArgs) -> Result<Status> {
    let report = EstimationReport::load(&a.estimate).with_context(|| format!("loading {}", a.estimate.display()))?;
    let traces = TraceSet::read_csv(&a.traces).with_context(|| format!("loading {}", a.traces.display()))?;
    let duration = *traces.times().last().context("empty time grid")?;
    let params = report.params()?;
    let coeffs = report.coefficients()?;
    let mut rng = rng::stream(a.seed, &["reconstruct".into()]);
    let (mut result, status) =
        match reconstruct(&params, &coeffs, report.kind, duration, &ReconstructOptions::default(), &mut rng) {
            Ok(r) => (r, Status::Success),
            Err(qsid::Error::GaugeUnfixable { worst, best_effort }) => {
                eprintln!("warning: gauge not fixable (worst off-diagonal {worst:.3e}); writing best effort");
                (*best_effort, Status::PartialFailure)
            }
            Err(e) => return Err(e.into()),
        };
    if let Some(path) = &a.truth {
        let truth = SystemSpec::load(path).with_context(|| format!("loading {}", path.display()))?;
        let with_damping = !report.damping.iter().all(|&g| g == 0.0);
        result.metrics = Some(compute_error_metrics(&truth, &params, &coeffs, &result, with_damping)?);
    }
    result.save(&a.out)?;
    Ok(status)
}

fn bench(a: BenchArgs) -> Result<Status> {
    let mut config = match &a.config {
        Some(path) => BenchmarkConfig::load(path)?,
        None => BenchmarkConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(out) = a.out {
        config.output_dir = Some(out);
    }
    if let Some(arms) = &a.arms {
        config.arms = parse_arms(arms)?;
    }
    if let Some(n) = a.n_systems {
        config.n_systems = n;
    }
    if let Some(j) = a.jobs {
        config.jobs = Some(j);
    }
    config.validate()?;
    let (report, _) = run_benchmark_timed(&config)?;
    print!("{}", emit_table(&report)?.text);
    if let Some(dir) = &config.output_dir {
        eprintln!("artifacts written to {}", dir.display());
    }
    if report.n_failed() > 0 {
        for arm in &report.arms {
            for (code, count) in &arm.failures {
                eprintln!("{}: {count} failed ({code})", arm.arm);
            }
        }
        return Ok(Status::PartialFailure);
    }
    Ok(Status::Success)
}

fn spectrum(a: SpectrumArgs) -> Result<Status> {
    let traces = TraceSet::read_csv(&a.traces).with_context(|| format!("loading {}", a.traces.display()))?;
    export_spectrum(&traces, a.zero_padding, &a.out)?;
    Ok(Status::Success)
}

fn tracefig(a: TracefigArgs) -> Result<Status> {
    let spec = SystemSpec::load(&a.spec).with_context(|| format!("loading {}", a.spec.display()))?;
    if a.k >= spec.dim() || a.l >= spec.dim() {
        bail!(qsid::Error::Config(format!("trace ({}, {}) outside dimension {}", a.k, a.l, spec.dim())));
    }
    let plan = a.sampling.plan(&spec)?;
    export_trace_figure_data(&spec, &plan, a.k, a.l, Some(&a.out))?;
    Ok(Status::Success)
}

/// Configuration and argument problems exit with 1, as do other errors;
/// only partial benchmark failures use 2.
fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Tracefig(a) => tracefig(a),
    };
    match outcome {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::PartialFailure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
