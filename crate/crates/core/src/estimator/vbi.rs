use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Sparsity and precision hyper-parameters of the three-layer prior:
/// support `s ~ Bernoulli(lambda)`, precision `rho ~ Gamma(a, b)` when
/// active and `Gamma(a_bar, b_bar)` when inactive, `x ~ CN(0, 1/rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsePriorConfig {
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub a_bar: f64,
    pub b_bar: f64,
}

impl SparsePriorConfig {
    pub fn new(lambda: f64, a: f64, b: f64, a_bar: f64, b_bar: f64) -> Result<Self> {
        let cfg = Self { lambda, a, b, a_bar, b_bar };
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidArgument(format!("lambda {lambda} must lie in (0, 1)")));
        }
        if [a, b, a_bar, b_bar].iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("Gamma parameters must be positive".into()));
        }
        if cfg.inactive_mean() < 1e3 * cfg.active_mean() {
            return Err(Error::InvalidArgument(
                "inactive precision mean must be at least 1e3 times the active one".into(),
            ));
        }
        Ok(cfg)
    }

    /// `lambda = k / l`, `a = b = 1`, `a_bar = 1e3`, `b_bar = 1`.
    pub fn for_expected_paths(k: usize, l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidArgument("empty dictionary".into()));
        }
        Self::new((k.max(1) as f64 / l as f64).min(0.5), 1.0, 1.0, 1e3, 1.0)
    }

    pub fn active_mean(&self) -> f64 {
        self.a / self.b
    }
    pub fn inactive_mean(&self) -> f64 {
        self.a_bar / self.b_bar
    }

    /// Posterior log-odds of `s = 1` for a column whose contribution to
    /// the evidence, with every other column at its current posterior, is
    /// summarised by `s = ξ^H C^{-1} ξ` and `q = ξ^H C^{-1} y` (`C` excludes
    /// the column). The active precision is the Gamma-MAP update around the
    /// maximum-likelihood variance `(|q|² - s) / s²`.
    pub fn support_log_odds(&self, s: f64, q2: f64) -> f64 {
        let gamma = if s > 0.0 { ((q2 - s) / (s * s)).max(0.0) } else { 0.0 };
        let active = (self.a + 1.0) / (self.b + gamma);
        let inactive = self.inactive_mean();
        let ev = |alpha: f64| (alpha / (alpha + s)).ln() + q2 / (alpha + s);
        (self.lambda / (1.0 - self.lambda)).ln() + ev(active) - ev(inactive)
    }
}

/// Mean-field posterior over `x`, `rho` and `s` for every dictionary column.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    pub x_mean: Vec<Complex64>,
    pub x_var: Vec<f64>,
    pub rho_mean: Vec<f64>,
    pub s_prob: Vec<f64>,
    /// Ascending indices with `s_prob > 0.5`.
    pub support: Vec<usize>,
}

pub const SUPPORT_THRESHOLD: f64 = 0.5;

impl PosteriorState {
    /// Support = the `init_size` columns with the largest normalized
    /// matched-filter output `|ξ^H y| / ‖ξ‖`.
    pub fn initial(
        y: &DVector<Complex64>,
        sensing: &DMatrix<Complex64>,
        prior: &SparsePriorConfig,
        init_size: usize,
    ) -> Self {
        let l = sensing.ncols();
        let corr = sensing.ad_mul(y);
        let mut score: Vec<(f64, usize)> = (0..l)
            .map(|j| {
                let n = sensing.column(j).norm();
                (if n > 0.0 { corr[j].norm() / n } else { 0.0 }, j)
            })
            .collect();
        score.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut support: Vec<usize> =
            score.iter().take(init_size.min(l)).filter(|s| s.0 > 0.0).map(|s| s.1).collect();
        support.sort_unstable();
        let mut state = Self {
            x_mean: vec![Complex64::new(0.0, 0.0); l],
            x_var: vec![1.0 / prior.inactive_mean(); l],
            rho_mean: vec![prior.inactive_mean(); l],
            s_prob: vec![prior.lambda; l],
            support: Vec::new(),
        };
        for &j in &support {
            state.x_var[j] = 1.0 / prior.active_mean();
            state.rho_mean[j] = prior.active_mean();
            state.s_prob[j] = 1.0;
        }
        state.support = support;
        state
    }

    /// Support = `init_size` columns chosen greedily against the deflated
    /// residual (orthogonal matching pursuit), so that one strong path does
    /// not claim the whole initial support through its neighbours.
    pub fn initial_greedy(
        y: &DVector<Complex64>,
        sensing: &DMatrix<Complex64>,
        prior: &SparsePriorConfig,
        init_size: usize,
    ) -> Self {
        let mut state = Self::initial(y, sensing, prior, 0);
        let Ok(greedy) = super::omp::omp(y, sensing, init_size, 0.0) else { return state };
        let mut support = greedy.support;
        support.sort_unstable();
        for &j in &support {
            state.x_var[j] = 1.0 / prior.active_mean();
            state.rho_mean[j] = prior.active_mean();
            state.s_prob[j] = 1.0;
        }
        state.support = support;
        state
    }

    pub fn len(&self) -> usize {
        self.x_mean.len()
    }
    pub fn is_empty(&self) -> bool {
        self.x_mean.is_empty()
    }

    /// Deactivates column `j`: inactive prior moments, zero mean.
    pub fn deactivate(&mut self, j: usize, prior: &SparsePriorConfig) {
        self.x_mean[j] = Complex64::new(0.0, 0.0);
        self.rho_mean[j] = prior.inactive_mean();
        self.x_var[j] = 1.0 / prior.inactive_mean();
        self.s_prob[j] = prior.lambda;
        self.support.retain(|&k| k != j);
    }

    /// Restriction to the columns `keep`, in that order.
    pub fn select(&self, keep: &[usize]) -> Self {
        let support = (0..keep.len()).filter(|&i| self.s_prob[keep[i]] > SUPPORT_THRESHOLD).collect();
        Self {
            x_mean: keep.iter().map(|&j| self.x_mean[j]).collect(),
            x_var: keep.iter().map(|&j| self.x_var[j]).collect(),
            rho_mean: keep.iter().map(|&j| self.rho_mean[j]).collect(),
            s_prob: keep.iter().map(|&j| self.s_prob[j]).collect(),
            support,
        }
    }
}

/// Gaussian posterior restricted to `support`: mean and covariance
/// `Σ = (Ξ_S^H Ξ_S / σ² + diag(ρ_S))^{-1}`, mean `Σ Ξ_S^H y / σ²`.
fn support_posterior(
    y: &DVector<Complex64>,
    xi_s: &DMatrix<Complex64>,
    rho_s: &[f64],
    noise_var: f64,
) -> Result<(DVector<Complex64>, DMatrix<Complex64>)> {
    let k = xi_s.ncols();
    let mut precision = xi_s.ad_mul(xi_s) / Complex64::new(noise_var, 0.0);
    let mut jitter = 0.0;
    for attempt in 0..8 {
        for i in 0..k {
            precision[(i, i)] += Complex64::new(rho_s[i] + jitter, 0.0);
        }
        if let Some(chol) = precision.clone().cholesky() {
            let rhs = xi_s.ad_mul(y) / Complex64::new(noise_var, 0.0);
            let mean = chol.solve(&rhs);
            return Ok((mean, chol.inverse()));
        }
        for i in 0..k {
            precision[(i, i)] -= Complex64::new(rho_s[i] + jitter, 0.0);
        }
        let scale = (0..k).map(|i| precision[(i, i)].re).fold(0.0, f64::max).max(1.0);
        jitter = scale * 1e-12 * 10f64.powi(attempt);
    }
    Err(Error::InvalidArgument("support posterior precision is not positive definite".into()))
}

/// One sweep over `q(x)`, `q(rho)`, `q(s)`. `q(x)` is exact on the current
/// support; every other column gets its posterior with the support
/// columns integrated out. `q(s)` compares the evidence of each column
/// being active against inactive given the rest of the support. The new
/// support is every column with `s_prob > 0.5`.
pub fn scvbi_iterate(
    y: &DVector<Complex64>,
    sensing: &DMatrix<Complex64>,
    prior: &SparsePriorConfig,
    state: &PosteriorState,
    noise_var: f64,
) -> Result<PosteriorState> {
    scvbi_iterate_limited(y, sensing, prior, state, noise_var, usize::MAX)
}

/// [`scvbi_iterate`] admitting at most `max_additions` columns that were
/// off the support, taken in decreasing order of support log-odds, and never more
/// than the rows left free.
pub fn scvbi_iterate_limited(
    y: &DVector<Complex64>,
    sensing: &DMatrix<Complex64>,
    prior: &SparsePriorConfig,
    state: &PosteriorState,
    noise_var: f64,
    max_additions: usize,
) -> Result<PosteriorState> {
    let (r, l) = sensing.shape();
    if y.len() != r {
        return Err(Error::DimensionMismatch { expected: r, got: y.len() });
    }
    if state.len() != l {
        return Err(Error::DimensionMismatch { expected: l, got: state.len() });
    }
    if !(noise_var > 0.0) {
        return Err(Error::InvalidArgument("noise variance must be positive".into()));
    }
    if state.support.len() > r {
        return Err(Error::OverDense { support: state.support.len(), rows: r });
    }
    let mut next = state.clone();
    // sequential pruning: near-duplicate columns each look redundant given
    // the others, so only the weakest member leaves before re-solving
    let mut support = state.support.clone();
    let mut dropped = Vec::new();
    let (mean, cov) = loop {
        if support.is_empty() {
            break (DVector::zeros(0), DMatrix::zeros(0, 0));
        }
        let xi_s = sensing.select_columns(&support);
        let rho_s: Vec<f64> = support.iter().map(|&j| state.rho_mean[j]).collect();
        let (mean, cov) = support_posterior(y, &xi_s, &rho_s, noise_var)?;
        let weakest = support
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                let v = cov[(i, i)].re.max(f64::MIN_POSITIVE);
                let s = (1.0 / v - state.rho_mean[j]).max(0.0);
                (prior.support_log_odds(s, (mean[i] / v).norm_sqr()), i)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match weakest {
            Some((odds, i)) if odds <= 0.0 => dropped.push(support.remove(i)),
            _ => break (mean, cov),
        }
    };
    let mut resid = y.clone();
    let mut slot = vec![None; l];
    // ξ_j^H C^{-1} ξ_j for off-support columns, as the ridge residual
    // (‖ξ_j - Ξ_S z_j‖² + σ² Σ_i ρ_i |z_ij|²) / σ² with z_j = Σ Ξ_S^H ξ_j / σ²;
    // a sum of nonnegative terms, unlike ‖ξ_j‖²/σ² minus the explained part
    let mut big_s = vec![0.0; l];
    if support.is_empty() {
        for j in 0..l {
            big_s[j] = sensing.column(j).norm_squared() / noise_var;
        }
    } else {
        let xi_s = sensing.select_columns(&support);
        resid -= &xi_s * &mean;
        for (i, &j) in support.iter().enumerate() {
            next.x_mean[j] = mean[i];
            next.x_var[j] = cov[(i, i)].re.max(f64::MIN_POSITIVE);
            slot[j] = Some(i);
        }
        let z = (&cov * xi_s.ad_mul(sensing)) / Complex64::new(noise_var, 0.0);
        let fitted = &xi_s * &z;
        for j in (0..l).filter(|&j| slot[j].is_none()) {
            let miss = (sensing.column(j) - fitted.column(j)).norm_squared();
            let shrink: f64 =
                support.iter().enumerate().map(|(i, &k)| state.rho_mean[k] * z[(i, j)].norm_sqr()).sum();
            big_s[j] = miss / noise_var + shrink;
        }
    }
    let corr = sensing.ad_mul(&resid);
    // additions are ranked by log-odds, which stay ordered after s_prob saturates
    let mut log_odds = vec![0.0; l];
    for j in 0..l {
        let big_q = corr[j] / noise_var;
        let alpha = state.rho_mean[j];
        // on the support, remove the column's own prior from its marginal
        let (s, q) = match slot[j] {
            Some(_) => {
                let v = next.x_var[j];
                ((1.0 / v - alpha).max(0.0), next.x_mean[j] / v)
            }
            None => (big_s[j], big_q),
        };
        if slot[j].is_none() {
            let v = 1.0 / (s + alpha);
            next.x_var[j] = v;
            next.x_mean[j] = q * v;
        }
        let e2 = next.x_mean[j].norm_sqr() + next.x_var[j];
        let pi = state.s_prob[j];
        let shape = pi * prior.a + (1.0 - pi) * prior.a_bar + 1.0;
        let rate = pi * prior.b + (1.0 - pi) * prior.b_bar + e2;
        next.rho_mean[j] = shape / rate;
        log_odds[j] = prior.support_log_odds(s, q.norm_sqr());
        next.s_prob[j] = 1.0 / (1.0 + (-log_odds[j]).exp());
    }
    support.retain(|&j| next.s_prob[j] > SUPPORT_THRESHOLD);
    let mut added: Vec<usize> = (0..l)
        .filter(|&j| slot[j].is_none() && !dropped.contains(&j) && next.s_prob[j] > SUPPORT_THRESHOLD)
        .collect();
    let room = max_additions.min(r - support.len());
    if added.len() > room {
        added.sort_by(|&a, &b| log_odds[b].total_cmp(&log_odds[a]).then(a.cmp(&b)));
        added.truncate(room);
    }
    support.extend(added);
    support.sort_unstable();
    next.support = support;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{complex_gaussian, rng_from_seed};

    fn random_sensing(r: usize, l: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(r, l, |_, _| complex_gaussian(&mut rng, 1.0))
    }

    #[test]
    fn prior_validation() {
        assert!(SparsePriorConfig::new(0.01, 1.0, 1.0, 1e3, 1.0).is_ok());
        assert!(SparsePriorConfig::new(0.01, 1.0, 1.0, 10.0, 1.0).is_err());
        assert!(SparsePriorConfig::new(0.0, 1.0, 1.0, 1e3, 1.0).is_err());
        assert!(SparsePriorConfig::new(0.1, -1.0, 1.0, 1e3, 1.0).is_err());
        let p = SparsePriorConfig::for_expected_paths(10, 2048).unwrap();
        assert!((p.lambda - 10.0 / 2048.0).abs() < 1e-15);
        // a strong correlation favours the active component, none the inactive one
        assert!(p.support_log_odds(100.0, 1e6) > 0.0);
        assert!(p.support_log_odds(100.0, 0.0) < 0.0);
    }

    #[test]
    fn zero_observation_empties_support() {
        let a = random_sensing(20, 60, 1);
        let y = DVector::zeros(20);
        let prior = SparsePriorConfig::for_expected_paths(2, 60).unwrap();
        let mut st = PosteriorState::initial(&y, &a, &prior, 0);
        st = PosteriorState { support: vec![3, 7], ..st };
        for _ in 0..10 {
            st = scvbi_iterate(&y, &a, &prior, &st, 0.01).unwrap();
            assert!(st.x_var.iter().all(|v| *v > 0.0));
            assert!(st.s_prob.iter().all(|p| (0.0..=1.0).contains(p)));
        }
        assert!(st.support.is_empty());
        assert!(st.s_prob.iter().all(|p| *p < 0.01));
        assert!(st.x_mean.iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn single_atom_recovery() {
        let a = random_sensing(32, 100, 2);
        let scale = Complex64::new(3.0, -4.0);
        let y: DVector<Complex64> = a.column(17) * scale;
        let prior = SparsePriorConfig::for_expected_paths(1, 100).unwrap();
        let mut st = PosteriorState::initial(&y, &a, &prior, 2);
        for _ in 0..20 {
            st = scvbi_iterate(&y, &a, &prior, &st, 1e-6).unwrap();
        }
        assert_eq!(st.support, vec![17]);
        // least-squares oracle on the true support
        let col = a.column(17);
        let ls = col.dotc(&y) / col.norm_squared();
        assert!((st.x_mean[17] - ls).norm() < 0.01 * ls.norm());
    }

    #[test]
    fn over_dense_support_is_rejected() {
        let a = random_sensing(4, 10, 3);
        let y = a.column(0).into_owned();
        let prior = SparsePriorConfig::for_expected_paths(1, 10).unwrap();
        let st = PosteriorState::initial(&y, &a, &prior, 5);
        let bad = PosteriorState { support: (0..5).collect(), ..st };
        assert!(matches!(
            scvbi_iterate(&y, &a, &prior, &bad, 0.1),
            Err(Error::OverDense { support: 5, rows: 4 })
        ));
    }
}
