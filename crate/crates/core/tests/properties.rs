use groupbeam_core::array::{array_response_sin, derive_seed, rng_from_seed, steering_y, steering_z, UpaGeometry, VerticalPrior};
use groupbeam_core::beam::{build_group_beam_matrix, GroupingPattern, SubIntervalPartition};
use groupbeam_core::eda::{sample_pattern, update_probability, Individual, ProbabilityMatrix};
use groupbeam_core::estimator::nmse;
use groupbeam_core::metrics::{isl, IslKernel, SidelobeRegion};
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;

fn pattern_strategy(n_y: usize, g: usize) -> impl Strategy<Value = GroupingPattern> {
    prop::collection::vec(prop::option::of(0..g), n_y)
        .prop_map(move |assign| GroupingPattern::new(g, assign).unwrap())
}

fn complete_pattern_strategy(n_y: usize, g: usize) -> impl Strategy<Value = GroupingPattern> {
    pattern_strategy(n_y, g).prop_filter("every group used", |p| p.is_complete())
}

proptest! {
    #[test]
    fn steering_vectors_are_unit_modulus(u in -1.0f64..1.0, v in -1.0f64..1.0, n in 1usize..40) {
        let c = (1.0 - v * v).sqrt();
        for a in steering_y(u, c, n).unwrap().iter().chain(steering_z(v, n).unwrap().iter()) {
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(steering_y(u, c, n).unwrap()[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn isl_depends_only_on_index_differences(
        active in prop::collection::btree_set(0usize..20, 1..8),
        shift in 0usize..12,
        phi in -0.5f64..0.0,
    ) {
        let n_y = 32;
        let k = IslKernel::new(phi, n_y, SidelobeRegion::default_for(n_y));
        let mut s = vec![false; n_y];
        let mut shifted = vec![false; n_y];
        let mut mirrored = vec![false; n_y];
        let top = *active.iter().max().unwrap();
        for &i in &active {
            s[i] = true;
            shifted[i + shift] = true;
            mirrored[top - i] = true;
        }
        let base = isl(&s, &k).unwrap();
        prop_assert!(base > 0.0);
        prop_assert!((isl(&shifted, &k).unwrap() - base).abs() < 1e-12 * base.max(1.0));
        prop_assert!((isl(&mirrored, &k).unwrap() - base).abs() < 1e-12 * base.max(1.0));
    }

    #[test]
    fn group_beam_output_matches_dense_product(
        pattern in complete_pattern_strategy(8, 3),
        seed in any::<u64>(),
    ) {
        let geom = UpaGeometry::new(8, 12, 4).unwrap();
        let part = SubIntervalPartition::uniform(&VerticalPrior::default(), 3).unwrap();
        let f = build_group_beam_matrix(&part, &pattern, &geom).unwrap();
        let mut rng = rng_from_seed(seed);
        use rand::Rng;
        let h: Vec<Complex64> =
            (0..geom.n_r()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let y = f.apply(&h).unwrap();
        let dense = f.dense() * DVector::from_vec(h.clone());
        for (a, b) in y.iter().zip(dense.iter()) {
            prop_assert!((a - b).norm() < 1e-10);
        }
        // unassigned columns leave their RF chains silent
        for (k, yk) in y.iter().enumerate() {
            if pattern.group_of(k / geom.t()).is_none() {
                prop_assert_eq!(*yk, Complex64::new(0.0, 0.0));
            }
        }
        let u: f64 = rng.gen_range(-1.0..1.0);
        let v: f64 = rng.gen_range(-0.5..0.0);
        let resp = f.response(u, v);
        let direct = f.apply(&array_response_sin(u, v, &geom)).unwrap();
        for (a, b) in resp.iter().zip(&direct) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn sampled_patterns_respect_the_row_constraint(
        weights in prop::collection::vec(0.0f64..1.0, 10 * 3),
        seed in any::<u64>(),
    ) {
        // scale each row so it sums to at most one
        let mut p = weights.clone();
        for row in p.chunks_mut(3) {
            let s: f64 = row.iter().sum();
            if s > 1.0 {
                row.iter_mut().for_each(|x| *x /= s);
            }
        }
        let pm = ProbabilityMatrix::new(10, 3, p.clone()).unwrap();
        let mut rng = rng_from_seed(seed);
        let pat = sample_pattern(&pm, &mut rng);
        for (n, a) in pat.assignment().iter().enumerate() {
            if let Some(g) = a {
                prop_assert!(p[n * 3 + g] > 0.0, "row {n} drew group {g} with zero weight");
            }
            prop_assert!(pat.to_binary()[n].iter().map(|&b| b as usize).sum::<usize>() <= 1);
        }
    }

    #[test]
    fn probability_update_is_elite_frequency(
        patterns in prop::collection::vec(pattern_strategy(6, 2), 1..12),
    ) {
        let elite: Vec<Individual> =
            patterns.iter().map(|p| Individual { pattern: p.clone(), fitness: 0.0, feasible: true }).collect();
        let pm = update_probability(&elite).unwrap();
        for n in 0..6 {
            let row_sum: f64 = pm.row(n).iter().sum();
            prop_assert!(row_sum <= 1.0 + 1e-12);
            for g in 0..2 {
                let count = patterns.iter().filter(|p| p.group_of(n) == Some(g)).count();
                prop_assert!((pm.get(n, g) - count as f64 / patterns.len() as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nmse_is_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = rng_from_seed(seed);
        use rand::Rng;
        let h: Vec<Complex64> = (0..16).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let e: Vec<Complex64> = (0..16).map(|_| Complex64::new(rng.gen_range(-0.1..0.1), 0.0)).collect();
        let hat: Vec<Complex64> = h.iter().zip(&e).map(|(a, b)| a + b).collect();
        let base = nmse(&hat, &h).unwrap();
        let hs: Vec<Complex64> = h.iter().map(|x| x * scale).collect();
        let hats: Vec<Complex64> = hat.iter().map(|x| x * scale).collect();
        prop_assert!((nmse(&hats, &hs).unwrap() - base).abs() < 1e-9 * base);
        prop_assert_eq!(nmse(&h, &h).unwrap(), 0.0);
        prop_assert!((nmse(&vec![Complex64::new(0.0, 0.0); 16], &h).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derived_seeds_are_stable_and_distinct(base in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assert_eq!(derive_seed(base, &[a, b]), derive_seed(base, &[a, b]));
        if a != b {
            prop_assert_ne!(derive_seed(base, &[a]), derive_seed(base, &[b]));
        }
    }
}
