//! Estimation-of-distribution search over antenna grouping patterns:
//! minimize the largest per-group ISL subject to per-group SRL bounds.

use std::cmp::Ordering;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::array::{derive_seed, rng_from_seed, UpaGeometry};
use crate::beam::{narrow_beam, GroupingPattern, SubIntervalPartition};
use crate::error::{Error, Result};
use crate::metrics::{beam_energy, isl, srl, srl_within, IslKernel, SidelobeRegion, SrlSetup};

/// Fixed SRL inputs per group (gains, noise level, group angle, beam energy).
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilitySetup {
    groups: Vec<GroupSrlParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSrlParams {
    pub beam_energy: f64,
    pub phi_g: f64,
    pub noise_var: f64,
    pub alpha: Complex64,
}

impl FeasibilitySetup {
    pub fn new(groups: Vec<GroupSrlParams>) -> Self {
        Self { groups }
    }

    /// Unit gains, noise standard deviation `sigma`, each group observed at
    /// its sub-interval centre through its narrow beam.
    pub fn from_partition(partition: &SubIntervalPartition, geom: &UpaGeometry, sigma: f64) -> Self {
        let groups = partition
            .centers()
            .iter()
            .map(|&c| {
                let beam = narrow_beam(c, geom.m()).expect("m > 0");
                GroupSrlParams {
                    beam_energy: beam_energy(&beam, geom.t(), c),
                    phi_g: c.asin(),
                    noise_var: sigma * sigma,
                    alpha: Complex64::new(1.0, 0.0),
                }
            })
            .collect();
        Self { groups }
    }

    pub fn g(&self) -> usize {
        self.groups.len()
    }

    pub fn srl_setup(&self, g: usize, s_g: Vec<bool>) -> SrlSetup {
        let p = &self.groups[g];
        let mut setup = SrlSetup::new(s_g, p.beam_energy, p.phi_g, p.noise_var);
        setup.alpha_1 = p.alpha;
        setup.alpha_2 = p.alpha;
        setup
    }

    pub fn srl(&self, g: usize, s_g: Vec<bool>) -> Result<f64> {
        srl(&self.srl_setup(g, s_g))
    }
}

/// One ISL kernel per group, evaluated at the sub-interval centres.
pub fn group_kernels(
    partition: &SubIntervalPartition,
    n_y: usize,
    region: SidelobeRegion,
) -> Vec<IslKernel> {
    partition.centers().iter().map(|c| IslKernel::new(c.asin(), n_y, region)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdaConfig {
    pub q: usize,
    pub t: usize,
    pub i_max: usize,
    pub srl_bounds: Vec<f64>,
    pub rng_seed: u64,
    /// Resampling attempts per individual before empty-group repair.
    pub max_attempts: usize,
    /// Count each distinct pattern once when selecting the elite.
    pub distinct_elite: bool,
}

impl EdaConfig {
    pub fn new(q: usize, t: usize, i_max: usize, srl_bounds: Vec<f64>, rng_seed: u64) -> Result<Self> {
        let cfg = Self { q, t, i_max, srl_bounds, rng_seed, max_attempts: 100, distinct_elite: true };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `Q = 200`, `T = 40`, `I_max = 50`.
    pub fn with_defaults(srl_bounds: Vec<f64>, rng_seed: u64) -> Result<Self> {
        Self::new(200, 40, 50, srl_bounds, rng_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 1 && self.t < self.q) {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= T < Q, got T={}, Q={}",
                self.t, self.q
            )));
        }
        if self.i_max == 0 {
            return Err(Error::InvalidArgument("I_max must be at least 1".into()));
        }
        if self.srl_bounds.is_empty() || self.srl_bounds.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidArgument("SRL bounds must be positive".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidArgument("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub pattern: GroupingPattern,
    pub fitness: f64,
    pub feasible: bool,
}

impl Individual {
    pub fn evaluate(
        pattern: GroupingPattern,
        kernels: &[IslKernel],
        bounds: &[f64],
        setup: &FeasibilitySetup,
    ) -> Self {
        let fitness = fitness(&pattern, kernels);
        let feasible = fitness.is_finite() && check_feasible(&pattern, bounds, setup);
        Self { pattern, fitness, feasible }
    }
}

/// `p(n, g)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    n_y: usize,
    g: usize,
    p: Vec<f64>,
}

impl ProbabilityMatrix {
    pub fn new(n_y: usize, g: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n_y * g {
            return Err(Error::DimensionMismatch { expected: n_y * g, got: p.len() });
        }
        if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidArgument("probabilities must lie in [0, 1]".into()));
        }
        Ok(Self { n_y, g, p })
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn g(&self) -> usize {
        self.g
    }
    pub fn get(&self, n: usize, g: usize) -> f64 {
        self.p[n * self.g + g]
    }
    pub fn row(&self, n: usize) -> &[f64] {
        &self.p[n * self.g..(n + 1) * self.g]
    }
}

/// Largest per-group ISL; `+inf` when any group is empty.
pub fn fitness(pattern: &GroupingPattern, kernels: &[IslKernel]) -> f64 {
    assert_eq!(pattern.g(), kernels.len(), "one kernel per group");
    let mut worst = 0.0_f64;
    for (g, k) in kernels.iter().enumerate() {
        match isl(&pattern.column(g), k) {
            Ok(v) => worst = worst.max(v),
            Err(_) => return f64::INFINITY,
        }
    }
    worst
}

/// `true` iff every group is nonempty and `SRL_g <= ρ_g` for all groups.
pub fn check_feasible(pattern: &GroupingPattern, bounds: &[f64], setup: &FeasibilitySetup) -> bool {
    if bounds.len() != pattern.g() || setup.g() != pattern.g() || !pattern.is_complete() {
        return false;
    }
    (0..pattern.g()).all(|g| {
        bounds[g] == f64::INFINITY || srl_within(&setup.srl_setup(g, pattern.column(g)), bounds[g])
    })
}

fn selection_cmp(a: &Individual, b: &Individual) -> Ordering {
    b.feasible
        .cmp(&a.feasible)
        .then(a.fitness.total_cmp(&b.fitness))
        .then_with(|| a.pattern.lex_cmp(&b.pattern))
}

/// The `t` best individuals: feasible before infeasible, then by fitness,
/// ties by lexicographic pattern order.
pub fn select_elite(population: &[Individual], t: usize) -> Vec<Individual> {
    let mut sorted: Vec<&Individual> = population.iter().collect();
    sorted.sort_by(|a, b| selection_cmp(a, b));
    sorted.into_iter().take(t).cloned().collect()
}

/// Like [`select_elite`] but keeps one copy of each distinct pattern; fewer
/// than `t` individuals are returned when the population has fewer distinct
/// patterns.
pub fn select_distinct_elite(population: &[Individual], t: usize) -> Vec<Individual> {
    let mut sorted: Vec<&Individual> = population.iter().collect();
    sorted.sort_by(|a, b| selection_cmp(a, b));
    sorted.dedup_by(|a, b| a.pattern == b.pattern);
    sorted.into_iter().take(t).cloned().collect()
}

/// Entry-wise mean of the elite binary matrices.
pub fn update_probability(elite: &[Individual]) -> Result<ProbabilityMatrix> {
    let first = elite.first().ok_or_else(|| Error::InvalidArgument("empty elite".into()))?;
    let (n_y, g) = (first.pattern.n_y(), first.pattern.g());
    let mut counts = vec![0usize; n_y * g];
    for ind in elite {
        for (n, a) in ind.pattern.assignment().iter().enumerate() {
            if let Some(k) = a {
                counts[n * g + k] += 1;
            }
        }
    }
    let t = elite.len() as f64;
    ProbabilityMatrix::new(n_y, g, counts.into_iter().map(|c| c as f64 / t).collect())
}

/// Per-row categorical draw: group `g` with weight `p(n, g)`, unassigned
/// with weight `max(0, 1 - Σ_g p(n, g))`.
pub fn sample_pattern<R: Rng + ?Sized>(p: &ProbabilityMatrix, rng: &mut R) -> GroupingPattern {
    let assign = (0..p.n_y())
        .map(|n| {
            let row = p.row(n);
            let total: f64 = row.iter().sum();
            let none = (1.0 - total).max(0.0);
            let mut u = rng.gen::<f64>() * (total + none);
            for (k, w) in row.iter().enumerate() {
                if u < *w {
                    return Some(k);
                }
                u -= w;
            }
            None
        })
        .collect();
    GroupingPattern::new(p.g(), assign).expect("row-sum constraint holds by construction")
}

/// Resamples until the pattern is feasible (at most `max_attempts` draws);
/// otherwise the last draw is returned after empty-group repair.
pub fn sample_individual<R: Rng + ?Sized>(
    p: &ProbabilityMatrix,
    kernels: &[IslKernel],
    bounds: &[f64],
    setup: &FeasibilitySetup,
    config: &EdaConfig,
    rng: &mut R,
) -> Result<Individual> {
    let mut last = None;
    for _ in 0..config.max_attempts.max(1) {
        let pattern = sample_pattern(p, rng);
        if pattern.is_complete() && check_feasible(&pattern, bounds, setup) {
            let fitness = fitness(&pattern, kernels);
            return Ok(Individual { pattern, fitness, feasible: true });
        }
        last = Some(pattern);
    }
    let mut pattern = last.expect("at least one draw");
    pattern.repair_empty_groups(rng)?;
    Ok(Individual::evaluate(pattern, kernels, bounds, setup))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdaResult {
    pub best: Individual,
    /// Best-so-far fitness after each of the `I_max` iterations.
    pub trace: Vec<f64>,
}

impl EdaResult {
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_trace_csv(&self.trace, writer)
    }
}

/// `(iteration, best_fitness)` rows, iterations counted from 1.
pub fn write_trace_csv<W: Write>(trace: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "best_fitness"])?;
    for (i, f) in trace.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{f:.12e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Draw budget for building the initial population.
pub const INIT_DRAW_CAP: usize = 10_000;

fn initial_population(
    config: &EdaConfig,
    kernels: &[IslKernel],
    setup: &FeasibilitySetup,
    n_y: usize,
) -> Result<Vec<Individual>> {
    let g = kernels.len();
    let mut feasible = Vec::with_capacity(config.q);
    let mut spare = Vec::new();
    let mut drawn = 0usize;
    // draws are evaluated in parallel batches, each with its own stream
    while feasible.len() < config.q && drawn < INIT_DRAW_CAP {
        let batch = (config.q - feasible.len()).max(16).min(INIT_DRAW_CAP - drawn);
        let evaluated: Vec<Individual> = (drawn..drawn + batch)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng_from_seed(derive_seed(config.rng_seed, &[0, k as u64]));
                let pattern = GroupingPattern::random(n_y, g, &mut rng)?;
                Ok(Individual::evaluate(pattern, kernels, &config.srl_bounds, setup))
            })
            .collect::<Result<_>>()?;
        drawn += batch;
        for ind in evaluated {
            if ind.feasible && feasible.len() < config.q {
                feasible.push(ind);
            } else if !ind.feasible && spare.len() < config.q {
                spare.push(ind);
            }
        }
    }
    if feasible.is_empty() {
        return Err(Error::Sampling(format!(
            "no feasible grouping pattern in {INIT_DRAW_CAP} random draws"
        )));
    }
    let missing = config.q - feasible.len();
    feasible.extend(spare.into_iter().take(missing));
    Ok(feasible)
}

/// Runs the search for `I_max` iterations with elitism; deterministic given
/// the seed regardless of thread count.
pub fn run_eda(
    config: &EdaConfig,
    kernels: &[IslKernel],
    setup: &FeasibilitySetup,
) -> Result<EdaResult> {
    config.validate()?;
    let g = kernels.len();
    if g == 0 || config.srl_bounds.len() != g || setup.g() != g {
        return Err(Error::InvalidArgument(format!(
            "group count mismatch: {g} kernels, {} bounds, {} SRL setups",
            config.srl_bounds.len(),
            setup.g()
        )));
    }
    let n_y = kernels[0].n_y();
    let mut population = initial_population(config, kernels, setup, n_y)?;
    let mut best: Option<Individual> = None;
    let mut trace = Vec::with_capacity(config.i_max);
    for iter in 1..=config.i_max {
        if let Some(b) = &best {
            population.push(b.clone());
        }
        let elite = if config.distinct_elite {
            select_distinct_elite(&population, config.t)
        } else {
            select_elite(&population, config.t)
        };
        best = Some(elite[0].clone());
        let b = elite[0].clone();
        trace.push(if b.feasible { b.fitness } else { f64::INFINITY });
        if iter == config.i_max {
            break;
        }
        let p = update_probability(&elite)?;
        population = (0..config.q - 1)
            .into_par_iter()
            .map(|k| {
                let mut rng =
                    rng_from_seed(derive_seed(config.rng_seed, &[iter as u64, k as u64]));
                sample_individual(&p, kernels, &config.srl_bounds, setup, config, &mut rng)
            })
            .collect::<Result<_>>()?;
    }
    Ok(EdaResult { best: best.expect("I_max >= 1"), trace })
}

/// `ρ_g = slack × median SRL_g` over `n_patterns` random patterns.
pub fn calibrate_srl_bounds(
    setup: &FeasibilitySetup,
    n_y: usize,
    n_patterns: usize,
    slack: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_patterns == 0 || !(slack > 0.0) {
        return Err(Error::InvalidArgument("calibration needs patterns and slack > 0".into()));
    }
    let g = setup.g();
    let patterns: Vec<GroupingPattern> = (0..n_patterns)
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(seed, &[k as u64]));
            GroupingPattern::random(n_y, g, &mut rng)
        })
        .collect::<Result<_>>()?;
    (0..g)
        .map(|gi| {
            let mut srls: Vec<f64> = patterns
                .par_iter()
                .map(|p| setup.srl(gi, p.column(gi)).unwrap_or(f64::INFINITY))
                .collect();
            srls.sort_by(f64::total_cmp);
            let mid = srls.len() / 2;
            let median = if srls.len() % 2 == 0 { 0.5 * (srls[mid - 1] + srls[mid]) } else { srls[mid] };
            if median.is_finite() {
                Ok(slack * median)
            } else {
                Err(Error::SrlOutOfRange { lo: 1e-4, hi: 1.0 })
            }
        })
        .collect()
}
