//! Seeded Monte-Carlo sweeps. Every beam and estimator at a given
//! `(point, trial)` sees the same channel and the same noise draw.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::time::Instant;

use groupbeam_core::array::{derive_seed, received_signal, sample_channel, GainProfile};
use groupbeam_core::beam::AnalogBeamMatrix;
use groupbeam_core::estimator::{estimate, nmse, DynamicGrid, EstimatorKind};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::{BeamKind, ExperimentConfig, SweepPoint};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub point: usize,
    pub trial: usize,
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub beam: BeamKind,
    pub snr_db: f64,
    pub k_paths: usize,
    /// Linear NMSE; NaN when the estimator failed.
    pub nmse: f64,
    pub support_size: usize,
    pub channel_hash: u64,
    pub wall_time_ms: f64,
}

impl ResultRow {
    pub fn nmse_db(&self) -> f64 {
        10.0 * self.nmse.log10()
    }
}

/// Seed of one `(point, trial)` cell.
pub fn trial_seed(base: u64, point: usize, trial: usize) -> u64 {
    derive_seed(base, &[point as u64, trial as u64])
}

/// Noise variance for a target per-antenna SNR of one realization.
pub fn noise_variance(h: &[Complex64], snr_db: f64) -> f64 {
    let power = h.iter().map(|x| x.norm_sqr()).sum::<f64>() / h.len() as f64;
    power / 10f64.powf(snr_db / 10.0)
}

pub fn channel_hash(h: &[Complex64]) -> u64 {
    let mut s = DefaultHasher::new();
    for x in h {
        x.re.to_bits().hash(&mut s);
        x.im.to_bits().hash(&mut s);
    }
    s.finish()
}

/// Precomputed inputs shared by all trials of a sweep.
pub struct SweepContext {
    pub beams: Vec<(BeamKind, AnalogBeamMatrix)>,
    pub grid: DynamicGrid,
}

impl SweepContext {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let beams = config.beams.iter().map(|&b| Ok((b, config.beam(b)?))).collect::<Result<_>>()?;
        Ok(Self { beams, grid: config.dynamic_grid()? })
    }
}

/// Runs every beam and estimator on one `(point, trial)` cell.
pub fn run_trial(
    config: &ExperimentConfig,
    ctx: &SweepContext,
    point_index: usize,
    point: &SweepPoint,
    trial: usize,
) -> Vec<ResultRow> {
    let seed = trial_seed(config.base_seed, point_index, trial);
    let est_cfg = config.estimator_config(point.k_paths);
    let row = |beam: BeamKind, estimator: EstimatorKind, hash: u64| ResultRow {
        point: point_index,
        trial,
        seed,
        estimator,
        beam,
        snr_db: point.snr_db,
        k_paths: point.k_paths,
        nmse: f64::NAN,
        support_size: 0,
        channel_hash: hash,
        wall_time_ms: f64::NAN,
    };
    let channel = sample_channel(
        point.k_paths,
        &config.prior,
        &config.azimuth,
        &GainProfile::default(),
        &config.geometry,
        derive_seed(seed, &[0]),
    );
    let Ok(channel) = channel else {
        return ctx
            .beams
            .iter()
            .flat_map(|(b, _)| config.estimators.iter().map(move |&e| row(*b, e, 0)))
            .collect();
    };
    let hash = channel_hash(&channel.h);
    let noise_var = noise_variance(&channel.h, point.snr_db);
    let mut rows = Vec::new();
    for (beam_kind, beam) in &ctx.beams {
        let y = received_signal(beam, &channel.h, noise_var, derive_seed(seed, &[1])).ok();
        for &kind in &config.estimators {
            let mut r = row(*beam_kind, kind, hash);
            if let Some(y) = &y {
                let t0 = Instant::now();
                let out = estimate(kind, y, beam, &ctx.grid, noise_var, &est_cfg);
                r.wall_time_ms = t0.elapsed().as_secs_f64() * 1e3;
                if let Ok(est) = out {
                    if let Ok(e) = nmse(&est.h_hat, &channel.h) {
                        r.nmse = e;
                        r.support_size = est.support_size;
                    }
                }
            }
            rows.push(r);
        }
    }
    rows
}

/// Runs the whole sweep. Trials run concurrently; rows come back ordered
/// by point, trial, beam and estimator as listed in the config.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let ctx = SweepContext::new(config)?;
    let cells: Vec<(usize, usize)> = (0..config.points.len())
        .flat_map(|p| (0..config.trials).map(move |t| (p, t)))
        .collect();
    let rows: Vec<Vec<ResultRow>> = cells
        .par_iter()
        .map(|&(p, t)| run_trial(config, &ctx, p, &config.points[p], t))
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

const HEADER: [&str; 10] =
    ["point", "trial", "seed", "estimator", "beam", "snr_db", "k_paths", "nmse", "support_size", "channel_hash"];

/// Deterministic result columns; identical inputs give identical bytes.
pub fn write_results_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.point.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.estimator.to_string(),
            r.beam.to_string(),
            r.snr_db.to_string(),
            r.k_paths.to_string(),
            format!("{:.9e}", r.nmse),
            r.support_size.to_string(),
            format!("{:016x}", r.channel_hash),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Wall times, keyed like the result rows.
pub fn write_timing_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["point", "trial", "estimator", "beam", "wall_time_ms"])?;
    for r in rows {
        w.write_record([
            r.point.to_string(),
            r.trial.to_string(),
            r.estimator.to_string(),
            r.beam.to_string(),
            format!("{:.3}", r.wall_time_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// NMSE in dB of the rows matching `(point, beam, estimator)`, in trial
/// order.
pub fn series_db(rows: &[ResultRow], point: usize, beam: BeamKind, estimator: EstimatorKind) -> Vec<f64> {
    let mut sel: Vec<&ResultRow> =
        rows.iter().filter(|r| r.point == point && r.beam == beam && r.estimator == estimator).collect();
    sel.sort_by_key(|r| r.trial);
    sel.iter().map(|r| r.nmse_db()).collect()
}
