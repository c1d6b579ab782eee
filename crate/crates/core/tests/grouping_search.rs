use groupbeam_core::array::{rng_from_seed, UpaGeometry, VerticalPrior};
use groupbeam_core::beam::{GroupingPattern, SubIntervalPartition};
use groupbeam_core::eda::{
    calibrate_srl_bounds, check_feasible, fitness, group_kernels, run_eda, sample_pattern, EdaConfig,
    FeasibilitySetup, ProbabilityMatrix,
};
use groupbeam_core::metrics::{IslKernel, SidelobeRegion};

fn problem(n_y: usize, g: usize) -> (Vec<IslKernel>, FeasibilitySetup) {
    let geom = UpaGeometry::new(n_y, 24, 12).unwrap();
    let part = SubIntervalPartition::uniform(&VerticalPrior::default(), g).unwrap();
    (
        group_kernels(&part, n_y, SidelobeRegion::default_for(n_y)),
        FeasibilitySetup::from_partition(&part, &geom, 0.18),
    )
}

/// Every assignment of `n_y` columns to `g` groups or none.
fn all_patterns(n_y: usize, g: usize) -> impl Iterator<Item = GroupingPattern> {
    let base = g + 1;
    (0..base.pow(n_y as u32)).map(move |mut code| {
        let assign = (0..n_y)
            .map(|_| {
                let d = code % base;
                code /= base;
                (d < g).then_some(d)
            })
            .collect();
        GroupingPattern::new(g, assign).unwrap()
    })
}

/// Best feasible fitness by brute force: rank all complete patterns by
/// fitness and take the first one that meets the resolution bounds.
fn exhaustive_optimum(n_y: usize, g: usize, kernels: &[IslKernel], bounds: &[f64], setup: &FeasibilitySetup) -> f64 {
    let mut ranked: Vec<(f64, GroupingPattern)> =
        all_patterns(n_y, g).filter(|p| p.is_complete()).map(|p| (fitness(&p, kernels), p)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    ranked.into_iter().find(|(_, p)| check_feasible(p, bounds, setup)).expect("some pattern is feasible").0
}

#[test]
fn enumeration_covers_the_constrained_set() {
    assert_eq!(all_patterns(4, 2).count(), 81);
    let complete = all_patterns(4, 2).filter(|p| p.is_complete()).count();
    // 3^4 minus patterns missing group 0 or group 1, plus the empty one
    assert_eq!(complete, 81 - 2 * 16 + 1);
}

#[test]
fn search_reaches_exhaustive_optimum_on_tiny_instance() {
    let (n_y, g) = (9, 2);
    let (kernels, setup) = problem(n_y, g);
    let bounds = calibrate_srl_bounds(&setup, n_y, 100, 1.1, 3).unwrap();
    let best = exhaustive_optimum(n_y, g, &kernels, &bounds, &setup);
    let mut hits = 0;
    for seed in 0..5 {
        let cfg = EdaConfig::new(100, 50, 40, bounds.clone(), seed).unwrap();
        let r = run_eda(&cfg, &kernels, &setup).unwrap();
        assert!(r.best.feasible);
        assert!(r.best.fitness >= best - 1e-12, "search beat the exhaustive optimum");
        if (r.best.fitness - best).abs() <= 1e-12 {
            hits += 1;
        }
    }
    assert!(hits >= 4, "{hits}/5 runs found the optimum {best}");
}

#[test]
fn calibrated_bounds_admit_half_the_random_patterns() {
    let (n_y, g) = (32, 4);
    let (_, setup) = problem(n_y, g);
    let bounds = calibrate_srl_bounds(&setup, n_y, 200, 1.1, 9).unwrap();
    let mut rng = rng_from_seed(10);
    let trials = 400;
    let feasible = (0..trials)
        .filter(|_| check_feasible(&GroupingPattern::random(n_y, g, &mut rng).unwrap(), &bounds, &setup))
        .count();
    // each bound alone admits about half the patterns or more; the joint
    // rate is lower
    let per_group: Vec<f64> = (0..g)
        .map(|gi| {
            let mut rng = rng_from_seed(11);
            let mut single = vec![f64::INFINITY; g];
            single[gi] = bounds[gi];
            (0..trials)
                .filter(|_| check_feasible(&GroupingPattern::random(n_y, g, &mut rng).unwrap(), &single, &setup))
                .count() as f64
                / trials as f64
        })
        .collect();
    for (gi, rate) in per_group.iter().enumerate() {
        assert!(*rate >= 0.45, "group {gi} admits only {rate}");
    }
    assert!(feasible > 0);
}

#[test]
fn pattern_sampling_matches_probabilities() {
    let (n_y, g) = (3, 2);
    let p = vec![0.5, 0.3, 0.1, 0.1, 0.0, 1.0];
    let pm = ProbabilityMatrix::new(n_y, g, p.clone()).unwrap();
    let mut rng = rng_from_seed(99);
    let draws = 20_000;
    let mut counts = vec![0usize; n_y * (g + 1)];
    for _ in 0..draws {
        let pat = sample_pattern(&pm, &mut rng);
        for n in 0..n_y {
            let slot = pat.group_of(n).unwrap_or(g);
            counts[n * (g + 1) + slot] += 1;
        }
    }
    for n in 0..n_y {
        let none = (1.0 - p[n * g] - p[n * g + 1]).max(0.0);
        for (slot, expect) in [p[n * g], p[n * g + 1], none].into_iter().enumerate() {
            let freq = counts[n * (g + 1) + slot] as f64 / draws as f64;
            // five binomial standard deviations
            let tol = 5.0 * (expect * (1.0 - expect) / draws as f64).sqrt() + 1e-12;
            assert!((freq - expect).abs() <= tol, "row {n} slot {slot}: {freq} vs {expect}");
        }
    }
}
