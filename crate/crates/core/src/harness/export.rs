use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimator::{summed_power_spectrum, PowerSpectrum};
use crate::model::exact_probability;
use crate::simulator::{synthesize_traces, SamplingPlan, TraceSet};
use crate::model::SystemSpec;

/// Write the summed periodogram that frequency seeding uses as
/// `omega,power` rows.
pub fn export_spectrum(traces: &TraceSet, zero_padding: usize, path: impl AsRef<Path>) -> Result<PowerSpectrum> {
    let spectrum = summed_power_spectrum(traces, zero_padding)?;
    spectrum.write_csv(path)?;
    Ok(spectrum)
}

/// One sample time of the ideal-versus-sampled trace comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFigurePoint {
    pub t: f64,
    pub ideal: f64,
    pub sampled: f64,
    /// Repetitions behind the sampled value; 0 for noiseless sampling.
    #[serde(rename = "Ne")]
    pub repetitions: u32,
}

/// Ideal probability `p_kℓ(t)` and the sampled trace on the plan's grid,
/// optionally written as CSV (`t,ideal,sampled,Ne`).
pub fn export_trace_figure_data(
    spec: &SystemSpec,
    plan: &SamplingPlan,
    k: usize,
    l: usize,
    path: Option<&Path>,
) -> Result<Vec<TraceFigurePoint>> {
    let traces = synthesize_traces(spec, plan)?;
    let sampled = traces.trace(k, l);
    let points: Vec<TraceFigurePoint> = plan
        .times
        .iter()
        .enumerate()
        .map(|(n, &t)| TraceFigurePoint {
            t,
            ideal: exact_probability(spec, k, l, t),
            sampled: sampled[n],
            repetitions: traces.repetitions(k, n),
        })
        .collect();
    if let Some(path) = path {
        let mut w = csv::Writer::from_path(path)?;
        for p in &points {
            w.serialize(p)?;
        }
        w.flush()?;
    }
    Ok(points)
}
