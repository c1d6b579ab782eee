//! Wall-clock timing of the estimators on one shared input.

use std::io::Write;
use std::time::Instant;

use groupbeam_core::array::{derive_seed, received_signal, sample_channel, GainProfile};
use groupbeam_core::estimator::{estimate, nmse, EstimatorKind};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::stats::median;
use crate::sweep::{noise_variance, trial_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub estimator: EstimatorKind,
    pub median_ms: f64,
    /// Median time over the median time of `scvbi`; NaN if that estimator
    /// is not benchmarked.
    pub ratio: f64,
    pub nmse_db: f64,
    pub repetitions: usize,
}

/// Times every configured estimator on trial 0 of the first sweep point,
/// observed through the first configured beam.
pub fn run_bench(config: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    let point = config.points.first().ok_or_else(|| Error::Config("no sweep point".into()))?;
    let beam_kind = config.beams[0];
    let beam = config.beam(beam_kind)?;
    let grid = config.dynamic_grid()?;
    let est_cfg = config.estimator_config(point.k_paths);
    let seed = trial_seed(config.base_seed, 0, 0);
    let channel = sample_channel(
        point.k_paths,
        &config.prior,
        &config.azimuth,
        &GainProfile::default(),
        &config.geometry,
        derive_seed(seed, &[0]),
    )?;
    let noise_var = noise_variance(&channel.h, point.snr_db);
    let y = received_signal(&beam, &channel.h, noise_var, derive_seed(seed, &[1]))?;

    let mut rows = Vec::new();
    for &kind in &config.estimators {
        let mut last = None;
        for _ in 0..config.bench_warmups {
            last = Some(estimate(kind, &y, &beam, &grid, noise_var, &est_cfg)?);
        }
        let mut times = Vec::with_capacity(config.bench_repetitions);
        for _ in 0..config.bench_repetitions {
            let t0 = Instant::now();
            let est = estimate(kind, &y, &beam, &grid, noise_var, &est_cfg)?;
            times.push(t0.elapsed().as_secs_f64() * 1e3);
            last = Some(est);
        }
        let est = last.expect("at least one repetition");
        rows.push(BenchRow {
            estimator: kind,
            median_ms: median(&times),
            ratio: f64::NAN,
            nmse_db: 10.0 * nmse(&est.h_hat, &channel.h)?.log10(),
            repetitions: times.len(),
        });
    }
    if let Some(reference) = rows.iter().find(|r| r.estimator == EstimatorKind::ScvbiFull).map(|r| r.median_ms) {
        for r in &mut rows {
            r.ratio = r.median_ms / reference;
        }
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["estimator", "median_ms", "ratio_to_scvbi", "nmse_db", "repetitions"])?;
    for r in rows {
        w.write_record([
            r.estimator.to_string(),
            format!("{:.3}", r.median_ms),
            format!("{:.4}", r.ratio),
            format!("{:.3}", r.nmse_db),
            r.repetitions.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
