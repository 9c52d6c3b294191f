//! Quasi-Newton minimization with a strong-Wolfe cubic line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when `‖g‖∞` falls below this.
    pub gradient_tolerance: f64,
    /// Stop when a step changes no coordinate by more than this times
    /// `1 + ‖x‖∞`.
    pub step_tolerance: f64,
    /// Stop when the objective decreases by less than this relative amount.
    pub value_tolerance: f64,
    /// Upper bound on `‖αp‖₂` for a single step.
    pub max_step: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-13,
            value_tolerance: 1e-15,
            max_step: 1.0,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    Value,
    MaxIterations,
    LineSearchFailed,
    NonFiniteStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub f_initial: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl BfgsOutcome {
    pub fn made_progress(&self) -> bool {
        self.f < self.f_initial
    }
}

/// Central-difference gradient with per-coordinate step
/// `rel_step · max(|x_i|, 1)`.
pub fn central_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], rel_step: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel_step * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

struct Objective<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Objective<F> {
    fn eval(&mut self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        self.evaluations += 1;
        let (f, g) = (self.f)(x.as_slice());
        (f, DVector::from_vec(g))
    }
}

struct Trial {
    alpha: f64,
    f: f64,
    g: DVector<f64>,
    slope: f64,
}

/// Minimize `f`, which returns the value and gradient at a point.
///
/// Non-finite values are treated as infeasible: the line search backs off
/// toward the last finite point.
pub fn minimize<F>(f: F, x0: &[f64], options: &BfgsOptions) -> BfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut obj = Objective { f, evaluations: 0 };
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, mut g) = obj.eval(&x);
    let f_initial = fx;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return BfgsOutcome {
            x: x0.to_vec(),
            f: fx,
            f_initial,
            iterations: 0,
            evaluations: obj.evaluations,
            termination: Termination::NonFiniteStart,
        };
    }
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        if g.amax() <= options.gradient_tolerance {
            termination = Termination::Gradient;
            break;
        }
        let mut p = -(&hinv * &g);
        if g.dot(&p) >= 0.0 {
            hinv = DMatrix::identity(n, n);
            fresh = true;
            p = -g.clone();
        }
        let alpha_max = options.max_step / p.norm();
        let trial = match line_search(&mut obj, &x, fx, &g, &p, alpha_max.min(1.0), alpha_max, options) {
            Some(t) => t,
            None if !fresh => {
                // retry from steepest descent before giving up
                hinv = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
            None => {
                termination = Termination::LineSearchFailed;
                break;
            }
        };
        iterations += 1;
        let s = &p * trial.alpha;
        let y = &trial.g - &g;
        let f_old = fx;
        x += &s;
        fx = trial.f;
        g = trial.g;

        let sy = s.dot(&y);
        if sy > 0.0 && y.iter().all(|v| v.is_finite()) {
            if fresh {
                hinv *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρsyᵀ)H(I − ρysᵀ) + ρssᵀ, expanded
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }

        if s.amax() <= options.step_tolerance * (1.0 + x.amax()) {
            termination = Termination::Step;
            break;
        }
        if (f_old - fx).abs() <= options.value_tolerance * fx.abs().max(1.0) {
            termination = Termination::Value;
            break;
        }
    }

    BfgsOutcome {
        x: x.as_slice().to_vec(),
        f: fx,
        f_initial,
        iterations,
        evaluations: obj.evaluations,
        termination,
    }
}

#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    obj: &mut Objective<F>,
    x: &DVector<f64>,
    f0: f64,
    g0: &DVector<f64>,
    p: &DVector<f64>,
    alpha_init: f64,
    alpha_max: f64,
    o: &BfgsOptions,
) -> Option<Trial>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let d0 = g0.dot(p);
    let mut probe = |alpha: f64| {
        let (f, g) = obj.eval(&(x + p * alpha));
        let slope = g.dot(p);
        Trial { alpha, f, g, slope }
    };
    let armijo = |t: &Trial| t.f.is_finite() && t.f <= f0 + o.c1 * t.alpha * d0;
    let curvature = |t: &Trial| t.slope.is_finite() && t.slope.abs() <= -o.c2 * d0;
    let mut best: Option<Trial> = None;
    let keep_best = |t: &Trial, best: &mut Option<Trial>| {
        if armijo(t) && t.f < f0 && best.as_ref().is_none_or(|b| t.f < b.f) {
            *best = Some(Trial { alpha: t.alpha, f: t.f, g: t.g.clone(), slope: t.slope });
        }
    };

    let mut prev = Trial { alpha: 0.0, f: f0, g: g0.clone(), slope: d0 };
    let mut alpha = alpha_init;
    let mut evals = 0;
    let (mut lo, mut hi);
    loop {
        if evals >= o.max_line_search {
            return best;
        }
        let t = probe(alpha);
        evals += 1;
        if !t.f.is_finite() || t.g.iter().any(|v| !v.is_finite()) {
            alpha = 0.5 * (prev.alpha + alpha);
            continue;
        }
        keep_best(&t, &mut best);
        if !armijo(&t) || (prev.alpha > 0.0 && t.f >= prev.f) {
            (lo, hi) = (prev, t);
            break;
        }
        if curvature(&t) {
            return Some(t);
        }
        if t.slope >= 0.0 {
            (lo, hi) = (t, prev);
            break;
        }
        if t.alpha >= alpha_max {
            return best;
        }
        alpha = (2.0 * t.alpha).min(alpha_max);
        prev = t;
    }

    // zoom: lo satisfies Armijo with the lower value; the minimizer lies
    // between lo and hi
    while evals < o.max_line_search {
        let width = (hi.alpha - lo.alpha).abs();
        if width <= f64::EPSILON * lo.alpha.abs().max(1e-300) {
            break;
        }
        let (a_min, a_max) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let mut a = cubic_minimizer(&lo, &hi).unwrap_or(0.5 * (lo.alpha + hi.alpha));
        if !(a > a_min + 0.1 * width && a < a_max - 0.1 * width) {
            a = 0.5 * (lo.alpha + hi.alpha);
        }
        let t = probe(a);
        evals += 1;
        if !t.f.is_finite() || t.g.iter().any(|v| !v.is_finite()) {
            hi = t;
            continue;
        }
        keep_best(&t, &mut best);
        if !armijo(&t) || t.f >= lo.f {
            hi = t;
        } else {
            if curvature(&t) {
                return Some(t);
            }
            if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
    }
    best
}

/// Minimizer of the cubic interpolating values and slopes at two points.
fn cubic_minimizer(a: &Trial, b: &Trial) -> Option<f64> {
    if !(a.f.is_finite() && b.f.is_finite() && a.slope.is_finite() && b.slope.is_finite()) {
        return None;
    }
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let x = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    x.is_finite().then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn rosenbrock_minimum() {
        let opts = BfgsOptions { max_step: 10.0, ..Default::default() };
        let out = minimize(rosenbrock, &[-1.2, 1.0], &opts);
        assert!((out.x[0] - 1.0).abs() < 1e-6, "{out:?}");
        assert!((out.x[1] - 1.0).abs() < 1e-6);
        assert!(out.made_progress());
    }

    #[test]
    fn quadratic_with_finite_difference_gradient() {
        let mut f = |x: &[f64]| 3.0 * (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2) + x[0] * x[1];
        let fg = |x: &[f64]| (f(x), central_gradient(&mut f, x, 1e-7));
        let out = minimize(fg, &[0.0, 0.0], &BfgsOptions { max_step: 10.0, ..Default::default() });
        // stationary point of the quadratic solves [6 1; 1 2] x = [12, -2]
        let (x0, x1) = (26.0 / 11.0, -24.0 / 11.0);
        assert!((out.x[0] - x0).abs() < 1e-6 && (out.x[1] - x1).abs() < 1e-6, "{out:?}");
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // minimum at x = 1 behind a wall at x < 0.5
        let fg = |x: &[f64]| {
            if x[0] < 0.5 {
                (f64::NAN, vec![f64::NAN])
            } else {
                ((x[0] - 1.0).powi(2), vec![2.0 * (x[0] - 1.0)])
            }
        };
        let out = minimize(fg, &[3.0], &BfgsOptions { max_step: 100.0, ..Default::default() });
        assert!((out.x[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn nonfinite_start_reports() {
        let out = minimize(|_: &[f64]| (f64::NAN, vec![0.0]), &[0.0], &BfgsOptions::default());
        assert_eq!(out.termination, Termination::NonFiniteStart);
        assert!(!out.made_progress());
    }
}
