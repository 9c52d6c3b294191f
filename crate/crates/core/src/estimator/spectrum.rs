use std::f64::consts::TAU;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::TraceSet;

/// Peak-picking and zero-padding knobs for the periodogram seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedOptions {
    /// Transform length as a multiple of the sample count.
    pub zero_padding: usize,
    /// Peaks below this fraction of the global maximum are ignored.
    pub relative_threshold: f64,
    /// Minimum peak separation in natural bins `2π/T`.
    pub min_separation_bins: f64,
    /// Doublet offsets, in natural bins, when too few peaks are found.
    pub doublet_offset_bins: f64,
}

impl Default for SeedOptions {
    fn default() -> Self {
        Self { zero_padding: 4, relative_threshold: 0.05, min_separation_bins: 2.0, doublet_offset_bins: 1.0 }
    }
}

/// One-sided power spectrum summed over all traces.
///
/// Normalized so the rows sum to `Σ_kℓ (1/N_t) Σ_n (d_kℓ;n − d̄_kℓ)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    /// Angular frequencies of the rows.
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    /// Spacing of the rows.
    pub resolution: f64,
    /// Natural frequency resolution `2π/(N_t Δt)` of the unpadded record.
    pub natural_bin: f64,
}

impl PowerSpectrum {
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["omega", "power"])?;
        for (f, p) in self.frequencies.iter().zip(&self.power) {
            w.write_record(&[format!("{f:e}"), format!("{p:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Interpolated positions of local maxima above the threshold, strongest
    /// first, greedily thinned to the minimum separation.
    pub fn peaks(&self, options: &SeedOptions) -> Vec<Peak> {
        let p = &self.power;
        let max = p.iter().copied().fold(0.0, f64::max);
        if !(max > 0.0) {
            return Vec::new();
        }
        let mut raw: Vec<Peak> = (1..p.len().saturating_sub(1))
            .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1] && p[i] >= options.relative_threshold * max)
            .map(|i| {
                let (y0, y1, y2) = (p[i - 1], p[i], p[i + 1]);
                let denom = y0 - 2.0 * y1 + y2;
                let shift = if denom < 0.0 { (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5) } else { 0.0 };
                Peak { omega: self.frequencies[i] + shift * self.resolution, power: y1 }
            })
            .collect();
        raw.sort_by(|a, b| b.power.total_cmp(&a.power));
        let min_sep = options.min_separation_bins * self.natural_bin;
        let mut kept: Vec<Peak> = Vec::new();
        for peak in raw {
            if kept.iter().all(|q| (q.omega - peak.omega).abs() >= min_sep) {
                kept.push(peak);
            }
        }
        kept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub omega: f64,
    pub power: f64,
}

/// Summed periodogram of the mean-removed traces.
pub fn summed_power_spectrum(traces: &TraceSet, zero_padding: usize) -> Result<PowerSpectrum> {
    let dt = traces.uniform_spacing().ok_or(Error::NonUniformGrid)?;
    let nt = traces.n_times();
    let len = nt * zero_padding.max(1);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let n_rows = len / 2 + 1;
    let mut power = vec![0.0; n_rows];
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for (_, d) in traces.traces() {
        let mean = d.iter().sum::<f64>() / nt as f64;
        buf.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
        for (z, &x) in buf.iter_mut().zip(d) {
            z.re = x - mean;
        }
        fft.process(&mut buf);
        for (i, p) in power.iter_mut().enumerate() {
            let two_sided = buf[i].norm_sqr() / (len * nt) as f64;
            let paired = i != 0 && !(len % 2 == 0 && i == len / 2);
            *p += if paired { 2.0 * two_sided } else { two_sided };
        }
    }
    let resolution = TAU / (len as f64 * dt);
    Ok(PowerSpectrum {
        frequencies: (0..n_rows).map(|i| i as f64 * resolution).collect(),
        power,
        resolution,
        natural_bin: TAU / (nt as f64 * dt),
    })
}

/// Candidate frequency vectors (each of length `m`, ascending) from the
/// summed periodogram.
///
/// With at least `m` peaks there is a single candidate, the `m` strongest.
/// With `K < m` peaks each peak in turn is split into `1 + m − K` lines
/// spread over `±doublet_offset_bins` natural bins, giving `K` candidates.
pub fn seed_frequencies(traces: &TraceSet, m: usize, options: &SeedOptions) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one transition".into()));
    }
    let spectrum = summed_power_spectrum(traces, options.zero_padding)?;
    let peaks = spectrum.peaks(options);
    if peaks.is_empty() {
        return Err(Error::NoPeaks);
    }
    if peaks.len() >= m {
        let mut omega: Vec<f64> = peaks[..m].iter().map(|p| p.omega).collect();
        omega.sort_by(f64::total_cmp);
        return Ok(vec![omega]);
    }
    let split = 1 + m - peaks.len();
    let offset = options.doublet_offset_bins * spectrum.natural_bin;
    let mut candidates = Vec::new();
    for (j, peak) in peaks.iter().enumerate() {
        let mut omega: Vec<f64> =
            peaks.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, p)| p.omega).collect();
        for s in 0..split {
            let frac = -1.0 + 2.0 * s as f64 / (split - 1) as f64;
            omega.push((peak.omega + frac * offset).max(0.5 * spectrum.resolution));
        }
        omega.sort_by(f64::total_cmp);
        candidates.push(omega);
    }
    Ok(candidates)
}
