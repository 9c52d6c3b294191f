//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3};
use qsid::model::{SystemSpec, C64};

type M3 = Matrix3<C64>;

/// Right-hand side of the dephasing master equation in the measurement
/// basis: `−i[H, ρ] + VρV − ½{V², ρ}`.
fn lindblad(h: &M3, v: &M3, v2: &M3, rho: &M3) -> M3 {
    let i = C64::new(0.0, 1.0);
    let comm = h * rho - rho * h;
    -comm * i + v * rho * v - (v2 * rho + rho * v2) * C64::new(0.5, 0.0)
}

/// Dormand–Prince 5(4) integration of the qutrit master equation from
/// `|k⟩⟨k|`, returning the populations at each requested (ascending) time.
pub fn rk45_populations(spec: &SystemSpec, k: usize, times: &[f64], rtol: f64, atol: f64) -> Vec<Vec<f64>> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] =
        [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

    let n = spec.dim();
    assert_eq!(n, 3, "oracle integrates qutrits only");
    let h: M3 = spec.hamiltonian().fixed_view::<3, 3>(0, 0).into_owned();
    let v: M3 = spec.dephasing_operator().fixed_view::<3, 3>(0, 0).into_owned();
    let v2 = v * v;
    let mut rho = M3::zeros();
    rho[(k, k)] = C64::new(1.0, 0.0);
    let mut t = 0.0;
    let mut dt: f64 = 1e-3;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while t < target {
            let step = dt.min(target - t);
            let mut stages = [M3::zeros(); 7];
            for s in 0..7 {
                let mut y = rho;
                for j in 0..s {
                    y += stages[j] * C64::new(step * A[s][j], 0.0);
                }
                stages[s] = lindblad(&h, &v, &v2, &y);
            }
            let mut y5 = rho;
            let mut y4 = rho;
            for s in 0..7 {
                y5 += stages[s] * C64::new(step * B5[s], 0.0);
                y4 += stages[s] * C64::new(step * B4[s], 0.0);
            }
            let err = (y5 - y4).iter().map(|z| z.norm()).fold(0.0, f64::max);
            let scale = atol + rtol * y5.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if err <= scale {
                t += step;
                rho = y5;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * (scale / err).powf(0.2)).clamp(0.2, 5.0) };
            dt = step * factor;
        }
        out.push((0..n).map(|l| rho[(l, l)].re).collect());
    }
    out
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration on
/// `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for iteration in 0.. {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 || iteration == 100 {
                let dp = {
                    let (mut q0, mut q1) = (1.0, z);
                    for j in 2..=n {
                        let q2 = ((2 * j - 1) as f64 * z * q1 - (j - 1) as f64 * q0) / j as f64;
                        q0 = q1;
                        q1 = q2;
                    }
                    n as f64 * (z * q1 - q0) / (z * z - 1.0)
                };
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    (x, w)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Natural-log evidence of one trace under the one-transition real model
/// `x₀ e^{−Γt}cos ωt + x₁`, Gaussian noise of unknown σ (prior 1/σ) and a
/// prior flat in the orthonormal amplitudes, i.e. density `√det G` in `x`.
///
/// Everything is integrated numerically: `x` on a Gauss–Legendre box of ±12
/// standard deviations around the least-squares point for every σ, then
/// `ln σ` by the trapezoid rule. The residual is evaluated directly at each
/// node. Constants independent of `(ω, Γ)` are dropped.
pub fn brute_force_log_evidence(times: &[f64], d: &[f64], omega: f64, gamma: f64, nodes: usize) -> f64 {
    let nt = times.len();
    let g = DMatrix::from_fn(2, nt, |r, n| if r == 0 { (-gamma * times[n]).exp() * (omega * times[n]).cos() } else { 1.0 });
    let gram = &g * g.transpose();
    let dv = DVector::from_column_slice(d);
    let x_hat = gram.clone().lu().solve(&(&g * &dv)).expect("invertible Gram matrix");
    let resid = |x0: f64, x1: f64| -> f64 {
        (0..nt).map(|n| (d[n] - x0 * g[(0, n)] - x1 * g[(1, n)]).powi(2)).sum()
    };
    let r_min = resid(x_hat[0], x_hat[1]);
    let cov = gram.clone().try_inverse().expect("invertible Gram matrix");
    let half = [12.0 * cov[(0, 0)].sqrt(), 12.0 * cov[(1, 1)].sqrt()];
    let log_prior = 0.5 * gram.determinant().ln();
    let (gx, gw) = gauss_legendre(nodes);

    let sigma_hat = (r_min / nt as f64).sqrt();
    let n_sigma = 121;
    let (lo, hi) = (sigma_hat.ln() - 6.0, sigma_hat.ln() + 6.0);
    let du = (hi - lo) / (n_sigma - 1) as f64;
    let mut per_sigma = Vec::with_capacity(n_sigma);
    let mut terms = Vec::with_capacity(nodes * nodes);
    for i in 0..n_sigma {
        let sigma = (lo + du * i as f64).exp();
        terms.clear();
        for (a, wa) in gx.iter().zip(&gw) {
            for (b, wb) in gx.iter().zip(&gw) {
                let r = resid(x_hat[0] + sigma * half[0] * a, x_hat[1] + sigma * half[1] * b);
                let log_like = -(nt as f64) * sigma.ln() - r / (2.0 * sigma * sigma);
                terms.push(log_like + (wa * wb * sigma * half[0] * sigma * half[1]).ln());
            }
        }
        // dσ/σ = du; trapezoid end weights
        let end = if i == 0 || i == n_sigma - 1 { 0.5 } else { 1.0 };
        per_sigma.push(log_sum_exp(&terms) + (end * du).ln());
    }
    log_sum_exp(&per_sigma) + log_prior
}

/// Exact mean and variance of Pearson's X² for one multinomial draw of `n`
/// trials over cell probabilities `p` (all positive).
pub fn pearson_moments(n: f64, p: &[f64]) -> (f64, f64) {
    let k = p.len() as f64;
    let inv: f64 = p.iter().map(|q| 1.0 / q).sum();
    (k - 1.0, 2.0 * (k - 1.0) + (inv - k * k - 2.0 * k + 2.0) / n)
}
