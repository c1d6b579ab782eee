use std::path::Path;
use std::process::Command;

use groupbeam_core::beam::GroupingPattern;
use groupbeam_core::estimator::EstimatorKind;
use groupbeam_harness::bench::run_bench;
use groupbeam_harness::curves::{horizontal_af_curves, linspace, write_isl_trace, write_vertical_af};
use groupbeam_harness::grouping::optimize_pattern;
use groupbeam_harness::sweep::{run_sweep, write_results_csv};
use groupbeam_harness::{BeamKind, Error, ExperimentConfig};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text, Path::new(".")).unwrap()
}

#[test]
fn empty_file_gives_desk_defaults() {
    let c = config("");
    assert_eq!((c.geometry.n_y(), c.geometry.n_z(), c.geometry.m()), (16, 24, 6));
    assert_eq!(c.groups, 4);
    assert_eq!(c.estimators, EstimatorKind::ALL.to_vec());
    assert_eq!(c.grid, (32, 64));
    let p = config("[geometry]\nprofile = \"paper\"");
    assert_eq!((p.geometry.n_y(), p.geometry.n_z(), p.geometry.m()), (64, 72, 12));
    assert_eq!(p.geometry.n_rf(), 384);
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        "[sweep]\ntrials = 0",
        "[beam]\nkinds = [\"group-opt\"]",
        "[beam]\npattern = \"does-not-exist.csv\"",
        "[beam]\nkinds = [\"sideways\"]",
        "[estimator]\nkinds = [\"lasso\"]",
        "[sweep]\naxis = \"k_paths\"\nvalues = [2.5]",
        "[bench]\nrepetitions = 3",
        "[geometry]\nprofile = \"huge\"",
        "[nonsense]\nx = 1",
        "[beam]\ngroups = 0",
    ];
    for text in bad {
        let r = ExperimentConfig::parse(text, Path::new("."));
        assert!(matches!(r, Err(Error::Config(_)) | Err(Error::Core(_))), "{text:?} was accepted");
    }
}

const SMALL: &str = r#"
[beam]
kinds = ["group-uniform", "random"]

[estimator]
kinds = ["gw-scvbi", "omp"]

[sweep]
values = [0, 10]
trials = 2
seed = 5
"#;

#[test]
fn sweep_is_reproducible_and_paired() {
    let c = config(SMALL);
    let rows = run_sweep(&c).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2 * 2);
    let mut a = Vec::new();
    write_results_csv(&rows, &mut a).unwrap();
    let mut b = Vec::new();
    write_results_csv(&run_sweep(&c).unwrap(), &mut b).unwrap();
    assert_eq!(a, b, "same config and seed must give identical bytes");
    for r in &rows {
        let peers = rows.iter().filter(|s| s.point == r.point && s.trial == r.trial);
        for s in peers {
            assert_eq!((s.channel_hash, s.seed), (r.channel_hash, r.seed));
        }
    }
    let hashes: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.channel_hash).collect();
    assert_eq!(hashes.len(), 4, "each (point, trial) draws its own channel");
    // the group-wise estimator needs a group-wise beam; failures become NaN rows
    for r in &rows {
        let expect_nan = r.beam == BeamKind::Random && r.estimator == EstimatorKind::GwScvbi;
        assert_eq!(r.nmse.is_nan(), expect_nan, "{r:?}");
        assert!(r.nmse.is_nan() || r.nmse >= 0.0);
    }
    let other = config(&SMALL.replace("seed = 5", "seed = 6"));
    assert_ne!(run_sweep(&other).unwrap()[0].channel_hash, rows[0].channel_hash);
}

#[test]
fn one_trial_one_point_one_estimator_is_one_row() {
    let c = config("[estimator]\nkinds = [\"omp\"]\n[sweep]\ntrials = 1");
    let rows = run_sweep(&c).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].wall_time_ms > 0.0 && rows[0].nmse > 0.0);
}

#[test]
fn bench_reports_ratios_against_full_solver() {
    let c = config("[estimator]\nkinds = [\"scvbi\", \"omp\"]\n[bench]\nrepetitions = 10\nwarmups = 1");
    let rows = run_bench(&c).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].ratio, 1.0);
    assert_eq!(rows[0].repetitions, 10);
    assert!(rows[1].median_ms < rows[0].median_ms, "omp should be faster: {rows:?}");
}

#[test]
fn vertical_af_is_normalized_on_the_diagonal() {
    let c = config("");
    let beam = c.beam(BeamKind::GroupUniform).unwrap();
    let grid = linspace(-0.5, 0.0, 9);
    let mut out = Vec::new();
    write_vertical_af(&beam, 0.2, &grid, &mut out).unwrap();
    let mut rdr = csv::Reader::from_reader(out.as_slice());
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (v1, v2, af): (f64, f64, f64) =
            (rec[0].parse().unwrap(), rec[1].parse().unwrap(), rec[2].parse().unwrap());
        if v1 == v2 {
            assert!((af - 1.0).abs() < 1e-12);
        }
        assert!((0.0..=1.0 + 1e-12).contains(&af));
        n += 1;
    }
    assert_eq!(n, 81);
}

/// Trapezoid integral of the squared curve over `|Δ| >= a`.
fn sidelobe_energy(deltas: &[f64], curve: &[f64], a: f64) -> f64 {
    deltas
        .windows(2)
        .zip(curve.windows(2))
        .filter(|(d, _)| d[0].abs() >= a && d[1].abs() >= a)
        .map(|(d, c)| 0.5 * (d[1] - d[0]) * (c[0] * c[0] + c[1] * c[1]))
        .sum()
}

#[test]
fn optimized_pattern_has_less_horizontal_sidelobe_energy_than_random() {
    let dir = tempfile::tempdir().unwrap();
    let base = "[geometry]\nn_y = 32\n[eda]\nq = 60\nt = 12\ni_max = 15\ncalibration_patterns = 60\n";
    let c = ExperimentConfig::parse(base, dir.path()).unwrap();
    let opt = optimize_pattern(&c).unwrap();
    let mut trace = Vec::new();
    write_isl_trace(&opt.result.trace, &mut trace).unwrap();
    let mut expect = Vec::new();
    opt.result.write_trace_csv(&mut expect).unwrap();
    assert_eq!(trace, expect, "the exported trace is the search trace verbatim");

    let path = dir.path().join("pattern.csv");
    opt.result.best.pattern.write_csv(std::fs::File::create(&path).unwrap(), &opt.header()).unwrap();
    let with_file = ExperimentConfig::parse(
        &format!("{base}[beam]\nkinds = [\"group-opt\"]\npattern = \"pattern.csv\""),
        dir.path(),
    )
    .unwrap();
    let pattern = with_file.pattern(BeamKind::GroupOpt).unwrap();
    assert_eq!(pattern, opt.result.best.pattern);

    let part = c.partition().unwrap();
    let deltas = linspace(-1.0, 1.0, 4001);
    let a = c.eda.region.a();
    let worst = |p: &GroupingPattern| {
        horizontal_af_curves(p, &part, c.geometry.m(), c.geometry.t(), &deltas)
            .unwrap()
            .iter()
            .map(|curve| sidelobe_energy(&deltas, curve, a))
            .fold(0.0, f64::max)
    };
    let opt_energy = worst(&pattern);
    let mut rng = groupbeam_core::array::rng_from_seed(4);
    let random: Vec<f64> =
        (0..20).map(|_| worst(&GroupingPattern::random(32, 4, &mut rng).unwrap())).collect();
    let below = random.iter().filter(|&&r| opt_energy < r).count();
    assert!(below >= 18, "optimized {opt_energy} vs random {random:?}");
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_groupbeam"))
}

#[test]
fn cli_runs_and_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[estimator]\nkinds = [\"omp\"]\n[sweep]\nvalues = [5]\ntrials = 2\n").unwrap();
    let out = dir.path().join("r.csv");
    let status = cli().arg("sweep").arg(&cfg).arg("-o").arg(&out).env("GROUPBEAM_THREADS", "2").status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(dir.path().join("r.csv.timing.csv").is_file());

    let est = cli().arg("estimate").arg(&cfg).arg("--seed").arg("3").output().unwrap();
    assert!(est.status.success());
    assert!(String::from_utf8_lossy(&est.stdout).contains("nmse_db="));

    let af = dir.path().join("h.csv");
    let status = cli().args(["af", "--kind", "horizontal"]).arg(&cfg).arg("-o").arg(&af).status().unwrap();
    assert!(status.success() && af.is_file());

    let missing = cli().arg("sweep").arg(dir.path().join("none.toml")).arg("-o").arg(&out).output().unwrap();
    assert!(!missing.status.success());
    let err = String::from_utf8_lossy(&missing.stderr);
    assert!(err.starts_with("error kind=config message="), "{err}");

    let threads = cli().arg("bench").arg(&cfg).env("GROUPBEAM_THREADS", "zero").output().unwrap();
    assert!(!threads.status.success());
}
