//! Plot-ready CSV curves: vertical and horizontal ambiguity functions and
//! the grouping-search convergence trace.

use std::io::Write;

use groupbeam_core::beam::{narrow_beam, AnalogBeamMatrix, GroupingPattern, SubIntervalPartition};
use groupbeam_core::eda::write_trace_csv;
use groupbeam_core::metrics::{beam_energy, horizontal_af, vertical_af_map};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    VerticalAf,
    HorizontalAf,
    IslTrace,
}

impl std::str::FromStr for CurveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vertical" | "vertical-af" => Ok(Self::VerticalAf),
            "horizontal" | "horizontal-af" => Ok(Self::HorizontalAf),
            "isl-trace" => Ok(Self::IslTrace),
            other => Err(Error::Config(format!("unknown curve kind '{other}'"))),
        }
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Columns `sin_phi1, sin_phi2, af`: `|χ(φ1, φ2)|` normalized by the
/// main-lobe values, so the diagonal is 1.
pub fn write_vertical_af<W: Write>(f_a: &AnalogBeamMatrix, sin_theta0: f64, grid: &[f64], writer: W) -> Result<()> {
    let map = vertical_af_map(f_a, sin_theta0, grid);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sin_phi1", "sin_phi2", "af"])?;
    for (i, row) in map.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            w.write_record([format!("{:.6}", grid[i]), format!("{:.6}", grid[j]), format!("{v:.9e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Normalized horizontal AF `|χ_g(Δ)| / |χ_g(0)|` of every group at its
/// sub-interval centre; one column per group.
pub fn horizontal_af_curves(
    pattern: &GroupingPattern,
    partition: &SubIntervalPartition,
    m: usize,
    t: usize,
    deltas: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if pattern.g() != partition.g() {
        return Err(Error::Config(format!(
            "pattern has {} groups, partition {}",
            pattern.g(),
            partition.g()
        )));
    }
    (0..pattern.g())
        .map(|g| {
            let center = partition.centers()[g];
            let energy = beam_energy(&narrow_beam(center, m)?, t, center);
            let s = pattern.column(g);
            let phi = center.asin();
            let peak = horizontal_af(&s, 0.0, phi, energy).norm();
            if peak == 0.0 {
                return Err(groupbeam_core::Error::EmptyGroup(g).into());
            }
            Ok(deltas.iter().map(|&d| horizontal_af(&s, d, phi, energy).norm() / peak).collect())
        })
        .collect()
}

pub fn write_horizontal_af<W: Write>(deltas: &[f64], curves: &[Vec<f64>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["delta".to_string()];
    header.extend((0..curves.len()).map(|g| format!("group_{g}")));
    w.write_record(&header)?;
    for (i, d) in deltas.iter().enumerate() {
        let mut rec = vec![format!("{d:.6}")];
        rec.extend(curves.iter().map(|c| format!("{:.9e}", c[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// The search trace, verbatim.
pub fn write_isl_trace<W: Write>(trace: &[f64], writer: W) -> Result<()> {
    Ok(write_trace_csv(trace, writer)?)
}
