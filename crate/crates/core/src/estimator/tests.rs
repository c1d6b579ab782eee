use super::*;
use crate::array::{rng_from_seed, UpaGeometry};
use crate::beam::{build_group_beam_matrix, GroupingPattern, SubIntervalPartition};
use rand::Rng;

fn desk_beam(g: usize) -> (AnalogBeamMatrix, DynamicGrid) {
    let geom = UpaGeometry::desk();
    let prior = VerticalPrior::default();
    let part = SubIntervalPartition::uniform(&prior, g).unwrap();
    let f = build_group_beam_matrix(&part, &GroupingPattern::uniform_contiguous(16, g).unwrap(), &geom)
        .unwrap();
    let grid = DynamicGrid::uniform(32, 64, &AzimuthRange::default(), &prior, Some(&part)).unwrap();
    (f, grid)
}

fn channel(points: &[(f64, f64)], gains: &[Complex64], geom: &crate::array::UpaGeometry) -> Vec<Complex64> {
    let mut h = vec![ZERO; geom.n_r()];
    for (&(u, v), &x) in points.iter().zip(gains) {
        for (hi, a) in h.iter_mut().zip(array_response_sin(u, v, geom)) {
            *hi += a * x;
        }
    }
    h
}

#[test]
fn nmse_examples() {
    let h = vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.0)];
    assert_eq!(nmse(&h, &h).unwrap(), 0.0);
    assert!((nmse(&[ZERO; 2], &h).unwrap() - 1.0).abs() < 1e-15);
    let twice: Vec<Complex64> = h.iter().map(|x| x * 2.0).collect();
    assert!((nmse(&twice, &h).unwrap() - 1.0).abs() < 1e-15);
    assert!(matches!(nmse(&h, &[ZERO; 2]), Err(Error::ZeroChannel)));
}

#[test]
fn sensing_matrix_columns() {
    let (f, grid) = desk_beam(4);
    let xi = build_sensing_matrix(&f, &grid);
    assert_eq!(xi.shape(), (64, 2048));
    let dense = f.dense();
    let bound = dense.norm() * (f.geom().n_r() as f64).sqrt();
    let mut rng = rng_from_seed(4);
    for _ in 0..10 {
        let l = rng.gen_range(0..grid.len());
        let a = DVector::from_vec(array_response_sin(grid.theta[l], grid.phi[l], f.geom()));
        let direct = &dense * a;
        assert!((xi.column(l) - &direct).norm() < 1e-10 * direct.norm().max(1.0));
        assert!(xi.column(l).norm() <= bound);
    }
}

#[test]
fn group_partition_structure() {
    let (f, grid) = desk_beam(4);
    let y: Vec<Complex64> = f.response(0.3, -0.2);
    let blocks = partition_groups(&y, &f, &grid).unwrap();
    assert_eq!(blocks.len(), 4);
    let total: usize = blocks.iter().map(|b| b.columns.len()).sum();
    assert_eq!(total, grid.len());
    let mut all_rows: Vec<usize> = blocks.iter().flat_map(|b| b.observation.rows.clone()).collect();
    all_rows.sort_unstable();
    let n = all_rows.len();
    all_rows.dedup();
    assert_eq!(all_rows.len(), n);
    assert_eq!(all_rows, f.used_rows());
    for b in &blocks {
        // N_RF/G x L/G blocks
        assert_eq!(b.xi.shape(), (16, 512));
        assert_eq!(b.observation.f_bar.shape(), (16, f.geom().n_r()));
    }
    let (f1, grid1) = desk_beam(1);
    let one = partition_groups(&f1.response(0.1, -0.1), &f1, &grid1).unwrap();
    assert_eq!(one.len(), 1);
    let full = build_sensing_matrix(&f1, &grid1).select_rows(&f1.used_rows());
    assert!((&one[0].xi - full).norm() < 1e-12);
    let mut unlabeled = grid.clone();
    unlabeled.group_index[5] = None;
    assert!(matches!(partition_groups(&y, &f, &unlabeled), Err(Error::Unlabeled(5))));
}

#[test]
fn reassembled_groups_reproduce_full_rows() {
    // y restricted to rows R_g equals Σ_i F̄_g A_i x_i summed over all groups
    let (f, grid) = desk_beam(4);
    let mut rng = rng_from_seed(9);
    let picks: Vec<usize> = (0..6).map(|_| rng.gen_range(0..grid.len())).collect();
    let gains: Vec<Complex64> =
        picks.iter().map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let points: Vec<(f64, f64)> = picks.iter().map(|&l| (grid.theta[l], grid.phi[l])).collect();
    let h = channel(&points, &gains, f.geom());
    let y = f.apply(&h).unwrap();
    let blocks = partition_groups(&y, &f, &grid).unwrap();
    for b in &blocks {
        let mut total = DVector::zeros(b.observation.rows.len());
        for (&l, &x) in picks.iter().zip(&gains) {
            let a = DVector::from_vec(array_response_sin(grid.theta[l], grid.phi[l], f.geom()));
            total += &b.observation.f_bar * a * x;
        }
        assert!((total - &b.observation.y_g).norm() < 1e-9 * b.observation.y_g.norm());
    }
}

#[test]
fn dropped_cross_terms_are_small() {
    let geom = UpaGeometry::new(16, 24, 12).unwrap();
    let prior = VerticalPrior::default();
    let part = SubIntervalPartition::uniform(&prior, 4).unwrap();
    let f = build_group_beam_matrix(&part, &GroupingPattern::uniform_contiguous(16, 4).unwrap(), &geom)
        .unwrap();
    let dense = f.dense();
    for g in 0..4 {
        let rows = f.group_rows(g).unwrap();
        let f_bar = dense.select_rows(&rows);
        let own = DVector::from_vec(array_response_sin(0.2, part.centers()[g], &geom));
        let own_e = (&f_bar * own).norm_squared();
        for i in (0..4).filter(|&i| i != g) {
            let other = DVector::from_vec(array_response_sin(0.2, part.centers()[i], &geom));
            let ratio = (&f_bar * other).norm_squared() / own_e;
            assert!(10.0 * ratio.log10() < -10.0, "g={g} i={i}: {ratio}");
        }
    }
}

fn on_grid_scenario(f: &AnalogBeamMatrix, grid: &DynamicGrid, picks: &[usize]) -> (Vec<Complex64>, Vec<Complex64>) {
    let points: Vec<(f64, f64)> = picks.iter().map(|&l| (grid.theta[l], grid.phi[l])).collect();
    let gains: Vec<Complex64> =
        (0..picks.len()).map(|k| Complex64::from_polar(1.0 - 0.2 * k as f64, 0.7 * k as f64)).collect();
    let h = channel(&points, &gains, f.geom());
    let y = f.apply(&h).unwrap();
    (h, y)
}

#[test]
fn exact_recovery_on_grid() {
    let (f, grid) = desk_beam(4);
    // well separated points: distinct azimuth cells, elevations in different groups
    let picks = [5 * 64 + 8, 14 * 64 + 30, 25 * 64 + 50];
    let cfg = EstimatorConfig::new(3);
    for k in 1..=3 {
        let (h, y) = on_grid_scenario(&f, &grid, &picks[..k]);
        for kind in EstimatorKind::ALL {
            let est = estimate(kind, &y, &f, &grid, 0.0, &cfg).unwrap();
            let e = nmse(&est.h_hat, &h).unwrap();
            assert!(e < 1e-4, "{kind} with {k} paths: nmse {e}");
        }
    }
}

#[test]
fn off_grid_path_is_refined() {
    let (f, grid) = desk_beam(4);
    let (du, dv) = DynamicGrid::spacing(&AzimuthRange::default(), &VerticalPrior::default(), 32, 64);
    let l = 12 * 64 + 21;
    let truth = (grid.theta[l] + 0.3 * du, grid.phi[l] + 0.3 * dv);
    let h = channel(&[truth], &[Complex64::new(0.8, 0.6)], f.geom());
    let y = f.apply(&h).unwrap();
    let cfg = EstimatorConfig::new(1);
    for out in [gw_scvbi(&y, &f, &grid, 0.0, &cfg).unwrap(), scvbi_full(&y, &f, &grid, 0.0, &cfg).unwrap()] {
        let est = &out.estimate;
        let best = est
            .points
            .iter()
            .zip(&est.gains)
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap()
            .0;
        assert!((best.0 - truth.0).abs() < 1e-3 && (best.1 - truth.1).abs() < 1e-3, "{best:?} vs {truth:?}");
    }
}

#[test]
fn gw_requires_group_factorization() {
    let (_, grid) = desk_beam(4);
    let wide = crate::beam::wide_beam_matrix(&VerticalPrior::default(), &UpaGeometry::desk());
    let y = wide.response(0.1, -0.2);
    assert!(matches!(
        gw_scvbi(&y, &wide, &grid, 0.1, &EstimatorConfig::new(2)),
        Err(Error::NotGroupWise)
    ));
    assert!(scvbi_full(&y, &wide, &grid, 0.1, &EstimatorConfig::new(2)).is_ok());
}

#[test]
fn zero_observation_gives_empty_estimate() {
    let (f, grid) = desk_beam(4);
    let y = vec![ZERO; f.n_rf()];
    let out = gw_scvbi(&y, &f, &grid, 0.1, &EstimatorConfig::new(2)).unwrap();
    assert_eq!(out.estimate.status, EstimateStatus::EmptySupport);
    assert!(out.estimate.h_hat.iter().all(|h| *h == ZERO));
}

#[test]
fn estimator_names_roundtrip() {
    for k in EstimatorKind::ALL {
        assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
    }
    assert!("lasso".parse::<EstimatorKind>().is_err());
}

#[test]
fn split_path_is_merged() {
    let (f, _) = desk_beam(4);
    let truth = (0.21, -0.3);
    let h = channel(&[truth], &[Complex64::new(0.6, -0.8)], f.geom());
    let y = f.apply(&h).unwrap();
    let rows = f.used_rows();
    let y_rows: Vec<Complex64> = rows.iter().map(|&k| y[k]).collect();
    let split = vec![(truth.0 - 0.012, truth.1), (truth.0 + 0.01, truth.1 + 0.002)];
    let gains = ls_gains(&f, &rows, &y_rows, &split).unwrap();
    let cfg = EstimatorConfig::new(1);
    let noise = 1e-10 * y_rows.iter().map(|v| v.norm_sqr()).sum::<f64>() / rows.len() as f64;
    let (points, gains) = consolidate(&f, &rows, &y_rows, split, gains, noise, &cfg);
    assert_eq!(points.len(), 1);
    assert!((points[0].0 - truth.0).abs() < 1e-6 && (points[0].1 - truth.1).abs() < 1e-6, "{points:?}");
    assert!((gains[0] - Complex64::new(0.6, -0.8)).norm() < 1e-5);

    // two genuinely distinct paths half a beamwidth apart stay separate
    let pair = [(0.2, -0.3), (0.26, -0.3)];
    let h2 = channel(&pair, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.9)], f.geom());
    let y2 = f.apply(&h2).unwrap();
    let y2_rows: Vec<Complex64> = rows.iter().map(|&k| y2[k]).collect();
    let g2 = ls_gains(&f, &rows, &y2_rows, &pair).unwrap();
    let noise2 = 1e-6 * y2_rows.iter().map(|v| v.norm_sqr()).sum::<f64>() / rows.len() as f64;
    let (kept, _) = consolidate(&f, &rows, &y2_rows, pair.to_vec(), g2, noise2, &cfg);
    assert_eq!(kept.len(), 2);
}
