use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::beam::AnalogBeamMatrix;

/// Box constraint for one grid point in the sine domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointBounds {
    pub theta: (f64, f64),
    pub phi: (f64, f64),
}

impl PointBounds {
    fn clamp(&self, theta: f64, phi: f64) -> (f64, f64) {
        (theta.clamp(self.theta.0, self.theta.1), phi.clamp(self.phi.0, self.phi.1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoConfig {
    /// Gradient steps per refinement call (`B`).
    pub b_steps: usize,
    /// Largest parameter displacement of a trial step, sine units.
    pub initial_step: f64,
    pub backtrack: f64,
    pub sufficient_increase: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        Self {
            b_steps: 3,
            initial_step: 0.01,
            backtrack: 0.5,
            sufficient_increase: 1e-4,
            max_backtracks: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefineReport {
    pub accepted: usize,
    /// Objective before the first step and after every accepted step.
    pub objective: Vec<f64>,
}

fn residual(
    f_a: &AnalogBeamMatrix,
    rows: &[usize],
    y: &[Complex64],
    points: &[(f64, f64)],
    x: &[Complex64],
) -> Vec<Complex64> {
    let mut res = y.to_vec();
    let mut col = vec![Complex64::new(0.0, 0.0); rows.len()];
    for (&(u, v), &xl) in points.iter().zip(x) {
        f_a.response_rows(rows, u, v, &mut col);
        for (r, c) in res.iter_mut().zip(&col) {
            *r -= c * xl;
        }
    }
    res
}

/// `L = -‖y - Σ_l ξ(θ_l, φ_l) x_l‖²` over the observation rows `rows`.
pub fn likelihood(
    f_a: &AnalogBeamMatrix,
    rows: &[usize],
    y: &[Complex64],
    points: &[(f64, f64)],
    x: &[Complex64],
) -> f64 {
    -residual(f_a, rows, y, points, x).iter().map(|r| r.norm_sqr()).sum::<f64>()
}

/// Objective and its gradient, laid out `[∂θ_0, ∂φ_0, ∂θ_1, ...]`.
pub fn likelihood_gradient(
    f_a: &AnalogBeamMatrix,
    rows: &[usize],
    y: &[Complex64],
    points: &[(f64, f64)],
    x: &[Complex64],
) -> (f64, Vec<f64>) {
    let res = residual(f_a, rows, y, points, x);
    let value = -res.iter().map(|r| r.norm_sqr()).sum::<f64>();
    let zero = Complex64::new(0.0, 0.0);
    let (mut col, mut du, mut dv) =
        (vec![zero; rows.len()], vec![zero; rows.len()], vec![zero; rows.len()]);
    let mut grad = Vec::with_capacity(2 * points.len());
    for (&(u, v), &xl) in points.iter().zip(x) {
        f_a.response_rows_with_grad(rows, u, v, &mut col, &mut du, &mut dv);
        let gu: Complex64 = res.iter().zip(&du).map(|(r, d)| r.conj() * d).sum();
        let gv: Complex64 = res.iter().zip(&dv).map(|(r, d)| r.conj() * d).sum();
        grad.push(2.0 * (gu * xl).re);
        grad.push(2.0 * (gv * xl).re);
    }
    (value, grad)
}

/// Projected gradient ascent on [`likelihood`] over the given points with
/// Armijo backtracking; `x` stays fixed. A step is accepted only when the
/// objective rises by at least `c · ∇L · Δ`, so the objective never
/// decreases. A non-finite gradient ends the refinement.
pub fn grid_refine(
    f_a: &AnalogBeamMatrix,
    rows: &[usize],
    y: &[Complex64],
    points: &mut [(f64, f64)],
    x: &[Complex64],
    bounds: &[PointBounds],
    cfg: &ArmijoConfig,
) -> RefineReport {
    assert_eq!(points.len(), x.len());
    if points.is_empty() || x.iter().all(|v| v.norm() == 0.0) {
        return RefineReport::default();
    }
    ascend(
        points,
        bounds,
        cfg,
        |p| likelihood(f_a, rows, y, p, x),
        |p| Some(likelihood_gradient(f_a, rows, y, p, x)),
    )
}

/// Least-squares gains of `points` on the rows `rows`, or `None` when the
/// columns are numerically dependent.
pub fn ls_gains(
    f_a: &AnalogBeamMatrix,
    rows: &[usize],
    y: &[Complex64],
    points: &[(f64, f64)],
) -> Option<Vec<Complex64>> {
    let mut a = DMatrix::<Complex64>::zeros(rows.len(), points.len());
    for (j, &(u, v)) in points.iter().enumerate() {
        f_a.response_rows(rows, u, v, a.column_mut(j).as_mut_slice());
    }
    let qr = a.qr();
    let r = qr.r();
    let diag_max = (0..r.ncols()).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    if diag_max == 0.0 || (0..r.ncols()).any(|i| r[(i, i)].norm() <= 1e-10 * diag_max) {
        return None;
    }
    let rhs = qr.q().ad_mul(&DVector::from_column_slice(y));
    r.solve_upper_triangular(&rhs).map(|x| x.iter().copied().collect())
}

/// [`grid_refine`] on the profiled objective `max_x L`: the gains are
/// re-solved by least squares at every trial position. Falls back to the
/// fixed gains `x` when the least-squares problem is rank deficient.
pub fn grid_refine_profiled(
    f_a: &AnalogBeamMatrix,
    rows: &[usize],
    y: &[Complex64],
    points: &mut [(f64, f64)],
    x: &[Complex64],
    bounds: &[PointBounds],
    cfg: &ArmijoConfig,
) -> RefineReport {
    if points.is_empty() || x.iter().all(|v| v.norm() == 0.0) {
        return RefineReport::default();
    }
    if ls_gains(f_a, rows, y, points).is_none() {
        return grid_refine(f_a, rows, y, points, x, bounds, cfg);
    }
    ascend(
        points,
        bounds,
        cfg,
        |p| match ls_gains(f_a, rows, y, p) {
            Some(g) => likelihood(f_a, rows, y, p, &g),
            None => f64::NEG_INFINITY,
        },
        // at the least-squares gains the fixed-gain gradient is the
        // gradient of the profiled objective
        |p| ls_gains(f_a, rows, y, p).map(|g| likelihood_gradient(f_a, rows, y, p, &g)),
    )
}

fn ascend(
    points: &mut [(f64, f64)],
    bounds: &[PointBounds],
    cfg: &ArmijoConfig,
    value_at: impl Fn(&[(f64, f64)]) -> f64,
    gradient_at: impl Fn(&[(f64, f64)]) -> Option<(f64, Vec<f64>)>,
) -> RefineReport {
    assert_eq!(points.len(), bounds.len());
    let mut report = RefineReport::default();
    let Some((mut value, mut grad)) = gradient_at(points) else { return report };
    report.objective.push(value);
    for _ in 0..cfg.b_steps {
        if grad.iter().any(|g| !g.is_finite()) {
            break;
        }
        let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if gmax == 0.0 {
            break;
        }
        let mut step = cfg.initial_step / gmax;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let trial: Vec<(f64, f64)> = points
                .iter()
                .zip(bounds)
                .enumerate()
                .map(|(i, (&(u, v), b))| b.clamp(u + step * grad[2 * i], v + step * grad[2 * i + 1]))
                .collect();
            let ascent: f64 = trial
                .iter()
                .zip(points.iter())
                .enumerate()
                .map(|(i, (t, p))| grad[2 * i] * (t.0 - p.0) + grad[2 * i + 1] * (t.1 - p.1))
                .sum();
            if ascent <= 0.0 {
                break;
            }
            if value_at(&trial) >= value + cfg.sufficient_increase * ascent {
                accepted = Some(trial);
                break;
            }
            step *= cfg.backtrack;
        }
        let Some(trial) = accepted else { break };
        let Some((v, g)) = gradient_at(&trial) else { break };
        points.copy_from_slice(&trial);
        debug_assert!(v >= value, "accepted step decreased the objective");
        value = v;
        grad = g;
        report.accepted += 1;
        report.objective.push(value);
    }
    report
}
