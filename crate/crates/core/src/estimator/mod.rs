//! Angular-domain sparse channel estimation: dictionary assembly, group
//! decomposition, SC-VBI with dynamic-grid refinement, and OMP.

mod grid;
mod omp;
mod refine;
mod vbi;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

pub use grid::DynamicGrid;
pub use omp::{omp, Dictionary, OmpResult, SeparableDictionary};
pub use refine::{
    grid_refine, grid_refine_profiled, likelihood, likelihood_gradient, ls_gains, ArmijoConfig, PointBounds,
    RefineReport,
};
pub use vbi::{scvbi_iterate, scvbi_iterate_limited, PosteriorState, SparsePriorConfig, SUPPORT_THRESHOLD};

use crate::array::{array_response_sin, AzimuthRange, VerticalPrior};
use crate::beam::AnalogBeamMatrix;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `F_a A(Ω)`: column `l` is `F_a a_R(θ_l, φ_l)`.
pub fn build_sensing_matrix(f_a: &AnalogBeamMatrix, grid: &DynamicGrid) -> DMatrix<Complex64> {
    let rows: Vec<usize> = (0..f_a.n_rf()).collect();
    let points: Vec<(f64, f64)> = grid.theta.iter().copied().zip(grid.phi.iter().copied()).collect();
    sensing_rows(f_a, &rows, &points)
}

fn sensing_rows(f_a: &AnalogBeamMatrix, rows: &[usize], points: &[(f64, f64)]) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(rows.len(), points.len());
    for (j, &(u, v)) in points.iter().enumerate() {
        f_a.response_rows(rows, u, v, m.column_mut(j).as_mut_slice());
    }
    m
}

/// Observation rows of one group: `y_g` and the nonzero-row slice `F̄_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupObservation {
    pub rows: Vec<usize>,
    pub y_g: DVector<Complex64>,
    pub f_bar: DMatrix<Complex64>,
}

/// One group's reduced model `y_g ≈ Ξ_g x_g`, `Ξ_g = F̄_g A_g(Ω_g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupBlock {
    pub observation: GroupObservation,
    pub xi: DMatrix<Complex64>,
    /// Grid indices of the columns of `xi`.
    pub columns: Vec<usize>,
}

pub fn partition_groups(
    y: &[Complex64],
    f_a: &AnalogBeamMatrix,
    grid: &DynamicGrid,
) -> Result<Vec<GroupBlock>> {
    let fact = f_a.group_factorization().ok_or(Error::NotGroupWise)?;
    if y.len() != f_a.n_rf() {
        return Err(Error::DimensionMismatch { expected: f_a.n_rf(), got: y.len() });
    }
    let g_count = fact.partition.g();
    grid.group_sizes(g_count)?;
    let dense = f_a.dense();
    (0..g_count)
        .map(|g| {
            let rows = f_a.group_rows(g)?;
            let columns = grid.members(g);
            let points: Vec<(f64, f64)> =
                columns.iter().map(|&i| (grid.theta[i], grid.phi[i])).collect();
            let f_bar = dense.select_rows(&rows);
            Ok(GroupBlock {
                observation: GroupObservation {
                    y_g: DVector::from_iterator(rows.len(), rows.iter().map(|&k| y[k])),
                    f_bar,
                    rows: rows.clone(),
                },
                xi: sensing_rows(f_a, &rows, &points),
                columns,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    GwScvbi,
    ScvbiFull,
    Omp,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [Self::GwScvbi, Self::ScvbiFull, Self::Omp];

    pub fn name(&self) -> &'static str {
        match self {
            Self::GwScvbi => "gw-scvbi",
            Self::ScvbiFull => "scvbi",
            Self::Omp => "omp",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gw-scvbi" => Ok(Self::GwScvbi),
            "scvbi" | "scvbi-full" => Ok(Self::ScvbiFull),
            "omp" => Ok(Self::Omp),
            other => Err(Error::Parse(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub k_expected: usize,
    /// SC-VBI + refinement iterations of the group-wise stage (and of the
    /// full-model solver).
    pub j_max: usize,
    /// Joint iterations on the pruned dictionary.
    pub d_joint: usize,
    pub armijo: ArmijoConfig,
    /// Refinement settings on the unpartitioned model (the joint stage and
    /// the full solver). Near-coincident support points make this problem
    /// poorly conditioned, so it takes more steps than the per-group solves.
    pub joint_armijo: ArmijoConfig,
    /// Initial support size is `ceil(init_factor * k_expected)`.
    pub init_factor: f64,
    /// Supported points closer than this in both coordinates are merged.
    pub merge_tol: f64,
    pub azimuth: AzimuthRange,
    pub prior: VerticalPrior,
    /// Noise variance used by the solvers is at least this fraction of the
    /// mean observation power.
    pub noise_floor: f64,
    pub omp_k_max: usize,
    /// Off-support columns admitted to the support per sweep.
    pub max_additions: usize,
    /// Support points closer than this many beamwidths are candidates for
    /// the final merge test.
    pub merge_radius: f64,
    /// Refinement settings of the final merge test.
    pub merge_armijo: ArmijoConfig,
    /// Adds the atoms of a greedy pass over the full observation to the
    /// pruned dictionary of the group-wise joint stage.
    pub greedy_candidates: bool,
}

impl EstimatorConfig {
    pub fn new(k_expected: usize) -> Self {
        Self {
            k_expected,
            j_max: 30,
            d_joint: 10,
            armijo: ArmijoConfig::default(),
            joint_armijo: ArmijoConfig { b_steps: 20, ..ArmijoConfig::default() },
            init_factor: 1.5,
            merge_tol: 1e-4,
            azimuth: AzimuthRange::default(),
            prior: VerticalPrior::default(),
            noise_floor: 1e-10,
            omp_k_max: 2 * k_expected,
            max_additions: 2,
            merge_radius: 0.5,
            merge_armijo: ArmijoConfig { b_steps: 50, ..ArmijoConfig::default() },
            greedy_candidates: true,
        }
    }

    fn init_size(&self, share: f64, rows: usize) -> usize {
        ((self.init_factor * self.k_expected as f64 * share).ceil() as usize).clamp(1, rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateStatus {
    Ok,
    /// No grid point survived; the estimate is the zero channel.
    EmptySupport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub h_hat: Vec<Complex64>,
    /// Final dictionary points and posterior means (or LS gains).
    pub points: Vec<(f64, f64)>,
    pub gains: Vec<Complex64>,
    pub support_size: usize,
    pub status: EstimateStatus,
}

fn synthesize(points: &[(f64, f64)], gains: &[Complex64], f_a: &AnalogBeamMatrix) -> Vec<Complex64> {
    let geom = f_a.geom();
    let mut h = vec![ZERO; geom.n_r()];
    for (&(u, v), &x) in points.iter().zip(gains) {
        if x == ZERO {
            continue;
        }
        for (hi, a) in h.iter_mut().zip(array_response_sin(u, v, geom)) {
            *hi += a * x;
        }
    }
    h
}

fn effective_noise(noise_var: f64, y_rows: &DVector<Complex64>, floor: f64) -> Result<f64> {
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidArgument(format!("noise variance {noise_var} must be >= 0")));
    }
    let power = y_rows.norm_squared() / y_rows.len().max(1) as f64;
    let v = noise_var.max(floor * power);
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidArgument("observation and noise are both zero".into()))
    }
}

/// A dictionary over a subset of observation rows whose columns move with
/// grid refinement.
struct Subproblem<'a> {
    f_a: &'a AnalogBeamMatrix,
    rows: Vec<usize>,
    y: DVector<Complex64>,
    points: Vec<(f64, f64)>,
    origin: Vec<(f64, f64)>,
    bounds: Vec<PointBounds>,
    sensing: DMatrix<Complex64>,
}

impl<'a> Subproblem<'a> {
    fn new(
        f_a: &'a AnalogBeamMatrix,
        rows: Vec<usize>,
        y: &[Complex64],
        points: Vec<(f64, f64)>,
        bounds: Vec<PointBounds>,
    ) -> Self {
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&k| y[k]));
        let sensing = sensing_rows(f_a, &rows, &points);
        Self { f_a, rows, y, origin: points.clone(), points, bounds, sensing }
    }

    fn refresh(&mut self, j: usize) {
        let (u, v) = self.points[j];
        self.f_a.response_rows(&self.rows, u, v, self.sensing.column_mut(j).as_mut_slice());
    }

    /// Merges supported points that collided: the weaker one leaves the
    /// support and returns to its original position.
    fn merge_duplicates(&mut self, state: &mut PosteriorState, prior: &SparsePriorConfig, tol: f64) {
        let support = state.support.clone();
        let mut dropped = Vec::new();
        for (i, &a) in support.iter().enumerate() {
            for &b in &support[i + 1..] {
                if dropped.contains(&a) || dropped.contains(&b) {
                    continue;
                }
                let (pa, pb) = (self.points[a], self.points[b]);
                if (pa.0 - pb.0).abs() < tol && (pa.1 - pb.1).abs() < tol {
                    let weak = if state.x_mean[a].norm() >= state.x_mean[b].norm() { b } else { a };
                    dropped.push(weak);
                }
            }
        }
        for j in dropped {
            state.deactivate(j, prior);
            self.points[j] = self.origin[j];
            self.refresh(j);
        }
    }

    /// Alternates SC-VBI sweeps and grid refinement of the support points.
    fn run(
        &mut self,
        mut state: PosteriorState,
        prior: &SparsePriorConfig,
        noise_var: f64,
        iterations: usize,
        cfg: &EstimatorConfig,
    ) -> Result<PosteriorState> {
        for _ in 0..iterations {
            state = scvbi_iterate_limited(&self.y, &self.sensing, prior, &state, noise_var, cfg.max_additions)?;
            if state.support.is_empty() {
                continue;
            }
            let support = state.support.clone();
            let mut pts: Vec<(f64, f64)> = support.iter().map(|&j| self.points[j]).collect();
            let x: Vec<Complex64> = support.iter().map(|&j| state.x_mean[j]).collect();
            let b: Vec<PointBounds> = support.iter().map(|&j| self.bounds[j]).collect();
            grid_refine_profiled(self.f_a, &self.rows, self.y.as_slice(), &mut pts, &x, &b, &cfg.armijo);
            for (i, &j) in support.iter().enumerate() {
                if pts[i] != self.points[j] {
                    self.points[j] = pts[i];
                    self.refresh(j);
                }
            }
            self.merge_duplicates(&mut state, prior, cfg.merge_tol);
        }
        Ok(state)
    }
}

fn full_bounds(cfg: &EstimatorConfig) -> PointBounds {
    PointBounds {
        theta: (cfg.azimuth.sin_lo(), cfg.azimuth.sin_hi()),
        phi: (cfg.prior.sin_lo(), cfg.prior.sin_hi()),
    }
}

/// Final model selection on near-coincident support points. The weaker
/// point of a close pair is dropped when the re-refined smaller model fits
/// the rows within a penalty of `2 σ² ln(2 |rows|)` per removed atom; the
/// gains of an accepted merge are re-solved by least squares.
fn consolidate(
    f_a: &AnalogBeamMatrix,
    rows: &[usize],
    y: &[Complex64],
    mut points: Vec<(f64, f64)>,
    mut gains: Vec<Complex64>,
    noise: f64,
    cfg: &EstimatorConfig,
) -> (Vec<(f64, f64)>, Vec<Complex64>) {
    let geom = f_a.geom();
    let (bw_u, bw_v) = (2.0 / geom.n_y() as f64, 2.0 / geom.n_z() as f64);
    let bounds = full_bounds(cfg);
    let penalty = 2.0 * noise * (2.0 * rows.len() as f64).ln();
    let mut current = -likelihood(f_a, rows, y, &points, &gains);
    'search: loop {
        let mut pairs = Vec::new();
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let d = ((points[i].0 - points[j].0) / bw_u).hypot((points[i].1 - points[j].1) / bw_v);
                if d < cfg.merge_radius {
                    pairs.push((d, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, i, j) in pairs {
            let weak = if gains[i].norm() >= gains[j].norm() { j } else { i };
            let mut trial: Vec<(f64, f64)> =
                points.iter().enumerate().filter(|&(k, _)| k != weak).map(|(_, p)| *p).collect();
            let kept: Vec<Complex64> = gains.iter().enumerate().filter(|&(k, _)| k != weak).map(|(_, g)| *g).collect();
            let trial_bounds = vec![bounds; trial.len()];
            grid_refine_profiled(f_a, rows, y, &mut trial, &kept, &trial_bounds, &cfg.merge_armijo);
            let Some(trial_gains) = ls_gains(f_a, rows, y, &trial) else { continue };
            let value = -likelihood(f_a, rows, y, &trial, &trial_gains);
            if value <= current + penalty {
                points = trial;
                gains = trial_gains;
                current = value;
                continue 'search;
            }
        }
        return (points, gains);
    }
}

fn finish(
    f_a: &AnalogBeamMatrix,
    points: Vec<(f64, f64)>,
    state: &PosteriorState,
) -> Estimate {
    let support_size = state.support.len();
    let h_hat = synthesize(&points, &state.x_mean, f_a);
    Estimate {
        h_hat,
        points,
        gains: state.x_mean.clone(),
        support_size,
        status: if support_size == 0 { EstimateStatus::EmptySupport } else { EstimateStatus::Ok },
    }
}

fn finish_merged(sub: &Subproblem, state: &PosteriorState, noise: f64, cfg: &EstimatorConfig) -> Estimate {
    let points: Vec<(f64, f64)> = state.support.iter().map(|&j| sub.points[j]).collect();
    let gains: Vec<Complex64> = state.support.iter().map(|&j| state.x_mean[j]).collect();
    let (points, gains) = consolidate(sub.f_a, &sub.rows, sub.y.as_slice(), points, gains, noise, cfg);
    let support_size = points.len();
    Estimate {
        h_hat: synthesize(&points, &gains, sub.f_a),
        points,
        gains,
        support_size,
        status: if support_size == 0 { EstimateStatus::EmptySupport } else { EstimateStatus::Ok },
    }
}

/// Output of an SC-VBI solve: estimate, final posterior over the returned
/// dictionary (before the final merge test), and the refined grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScvbiOutput {
    pub estimate: Estimate,
    pub state: PosteriorState,
    pub grid: DynamicGrid,
}

/// Group-wise SC-VBI: independent per-group solves on `(y_g, Ξ_g)` with
/// elevation confined to the group's sub-interval, then joint iterations on
/// the dictionary pruned to the per-group supports.
pub fn gw_scvbi(
    y: &[Complex64],
    f_a: &AnalogBeamMatrix,
    grid: &DynamicGrid,
    noise_var: f64,
    cfg: &EstimatorConfig,
) -> Result<ScvbiOutput> {
    let fact = f_a.group_factorization().ok_or(Error::NotGroupWise)?;
    if y.len() != f_a.n_rf() {
        return Err(Error::DimensionMismatch { expected: f_a.n_rf(), got: y.len() });
    }
    let partition = fact.partition.clone();
    let g_count = partition.g();
    let sizes = grid.group_sizes(g_count)?;
    let l = grid.len();
    let prior = SparsePriorConfig::for_expected_paths(cfg.k_expected, l)?;
    let used = f_a.used_rows();
    let y_used = DVector::from_iterator(used.len(), used.iter().map(|&k| y[k]));
    let noise = effective_noise(noise_var, &y_used, cfg.noise_floor)?;
    let theta_bounds = (cfg.azimuth.sin_lo(), cfg.azimuth.sin_hi());

    let stage1: Vec<(Vec<usize>, Vec<(f64, f64)>, PosteriorState)> = (0..g_count)
        .into_par_iter()
        .map(|g| {
            let rows = f_a.group_rows(g)?;
            let members = grid.members(g);
            let points = members.iter().map(|&i| (grid.theta[i], grid.phi[i])).collect();
            let bounds = vec![PointBounds { theta: theta_bounds, phi: partition.bounds(g) }; members.len()];
            let mut sub = Subproblem::new(f_a, rows, y, points, bounds);
            let init = cfg.init_size(sizes[g] as f64 / l as f64, sub.rows.len());
            let state = PosteriorState::initial_greedy(&sub.y, &sub.sensing, &prior, init);
            let state = sub.run(state, &prior, noise, cfg.j_max, cfg)?;
            Ok((members, sub.points, state))
        })
        .collect::<Result<_>>()?;

    let mut refined = grid.clone();
    let mut pruned_points: Vec<(f64, f64)> = Vec::new();
    for (members, points, state) in &stage1 {
        for (local, &i) in members.iter().enumerate() {
            refined.theta[i] = points[local].0;
            refined.phi[i] = points[local].1;
        }
        pruned_points.extend(state.support.iter().map(|&j| points[j]));
    }
    if cfg.greedy_candidates {
        // paths missed by every per-group solve can still enter the joint stage
        for p in omp_estimate(y, f_a, grid, noise_var, cfg)?.points {
            if !pruned_points.iter().any(|q| (q.0 - p.0).abs() < cfg.merge_tol && (q.1 - p.1).abs() < cfg.merge_tol) {
                pruned_points.push(p);
            }
        }
    }
    if pruned_points.is_empty() {
        let empty = PosteriorState {
            x_mean: Vec::new(),
            x_var: Vec::new(),
            rho_mean: Vec::new(),
            s_prob: Vec::new(),
            support: Vec::new(),
        };
        return Ok(ScvbiOutput { estimate: finish(f_a, Vec::new(), &empty), state: empty, grid: refined });
    }
    let bounds = vec![full_bounds(cfg); pruned_points.len()];
    let mut joint = Subproblem::new(f_a, used, y, pruned_points, bounds);
    let init = PosteriorState::initial_greedy(&joint.y, &joint.sensing, &prior, cfg.init_size(1.0, joint.rows.len()));
    let jcfg = EstimatorConfig { armijo: cfg.joint_armijo, ..cfg.clone() };
    let state = joint.run(init, &prior, noise, cfg.d_joint, &jcfg)?;
    let estimate = finish_merged(&joint, &state, noise, cfg);
    Ok(ScvbiOutput { estimate, state, grid: refined })
}

/// SC-VBI with refinement on the unpartitioned model over every used row
/// and every grid point.
pub fn scvbi_full(
    y: &[Complex64],
    f_a: &AnalogBeamMatrix,
    grid: &DynamicGrid,
    noise_var: f64,
    cfg: &EstimatorConfig,
) -> Result<ScvbiOutput> {
    if y.len() != f_a.n_rf() {
        return Err(Error::DimensionMismatch { expected: f_a.n_rf(), got: y.len() });
    }
    let prior = SparsePriorConfig::for_expected_paths(cfg.k_expected, grid.len())?;
    let points: Vec<(f64, f64)> = grid.theta.iter().copied().zip(grid.phi.iter().copied()).collect();
    let bounds = vec![full_bounds(cfg); points.len()];
    let mut sub = Subproblem::new(f_a, f_a.used_rows(), y, points, bounds);
    let noise = effective_noise(noise_var, &sub.y, cfg.noise_floor)?;
    let state = PosteriorState::initial_greedy(&sub.y, &sub.sensing, &prior, cfg.init_size(1.0, sub.rows.len()));
    let jcfg = EstimatorConfig { armijo: cfg.joint_armijo, ..cfg.clone() };
    let state = sub.run(state, &prior, noise, cfg.j_max, &jcfg)?;
    let mut refined = grid.clone();
    for (i, p) in sub.points.iter().enumerate() {
        refined.theta[i] = p.0;
        refined.phi[i] = p.1;
    }
    let estimate = finish_merged(&sub, &state, noise, cfg);
    Ok(ScvbiOutput { estimate, state, grid: refined })
}

/// OMP over the fixed grid; stops at `omp_k_max` atoms or when the residual
/// energy reaches the noise level.
pub fn omp_estimate(
    y: &[Complex64],
    f_a: &AnalogBeamMatrix,
    grid: &DynamicGrid,
    noise_var: f64,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    if y.len() != f_a.n_rf() {
        return Err(Error::DimensionMismatch { expected: f_a.n_rf(), got: y.len() });
    }
    let rows = f_a.used_rows();
    let y_rows = DVector::from_iterator(rows.len(), rows.iter().map(|&k| y[k]));
    let noise = effective_noise(noise_var, &y_rows, cfg.noise_floor)?;
    let tol = rows.len() as f64 * noise;
    let result = match SeparableDictionary::new(f_a, rows.clone(), grid) {
        Ok(dict) => omp(&y_rows, &dict, cfg.omp_k_max, tol)?,
        Err(_) => {
            let points: Vec<(f64, f64)> =
                grid.theta.iter().copied().zip(grid.phi.iter().copied()).collect();
            omp(&y_rows, &sensing_rows(f_a, &rows, &points), cfg.omp_k_max, tol)?
        }
    };
    let points: Vec<(f64, f64)> = result.support.iter().map(|&j| (grid.theta[j], grid.phi[j])).collect();
    let h_hat = synthesize(&points, &result.coefficients, f_a);
    let support_size = result.support.len();
    Ok(Estimate {
        h_hat,
        points,
        gains: result.coefficients,
        support_size,
        status: if support_size == 0 { EstimateStatus::EmptySupport } else { EstimateStatus::Ok },
    })
}

/// Runs `kind` and returns its channel estimate.
pub fn estimate(
    kind: EstimatorKind,
    y: &[Complex64],
    f_a: &AnalogBeamMatrix,
    grid: &DynamicGrid,
    noise_var: f64,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    match kind {
        EstimatorKind::GwScvbi => gw_scvbi(y, f_a, grid, noise_var, cfg).map(|o| o.estimate),
        EstimatorKind::ScvbiFull => scvbi_full(y, f_a, grid, noise_var, cfg).map(|o| o.estimate),
        EstimatorKind::Omp => omp_estimate(y, f_a, grid, noise_var, cfg),
    }
}

/// `‖ĥ - h‖² / ‖h‖²`.
pub fn nmse(h_hat: &[Complex64], h_true: &[Complex64]) -> Result<f64> {
    if h_hat.len() != h_true.len() {
        return Err(Error::DimensionMismatch { expected: h_true.len(), got: h_hat.len() });
    }
    let den: f64 = h_true.iter().map(|h| h.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::ZeroChannel);
    }
    let num: f64 = h_hat.iter().zip(h_true).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(num / den)
}

#[cfg(test)]
mod tests;
