//! Grouping-pattern optimization as configured.

use groupbeam_core::eda::{calibrate_srl_bounds, group_kernels, run_eda, EdaConfig, EdaResult, FeasibilitySetup};

use crate::config::ExperimentConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub result: EdaResult,
    pub srl_bounds: Vec<f64>,
}

/// Calibrates the resolution bounds on random patterns, then runs the
/// search.
pub fn optimize_pattern(config: &ExperimentConfig) -> Result<Optimized> {
    let part = config.partition()?;
    let n_y = config.geometry.n_y();
    let e = &config.eda;
    let setup = FeasibilitySetup::from_partition(&part, &config.geometry, e.sigma);
    let srl_bounds = calibrate_srl_bounds(&setup, n_y, e.calibration_patterns, e.slack, e.seed)?;
    let kernels = group_kernels(&part, n_y, e.region);
    let eda_cfg = EdaConfig::new(e.q, e.t, e.i_max, srl_bounds.clone(), e.seed)?;
    let result = run_eda(&eda_cfg, &kernels, &setup)?;
    Ok(Optimized { result, srl_bounds })
}

impl Optimized {
    /// Comment lines stored above the pattern in its CSV file.
    pub fn header(&self) -> Vec<String> {
        let bounds: Vec<String> = self.srl_bounds.iter().map(|b| format!("{b:.6e}")).collect();
        vec![
            format!("fitness = {:.9e}", self.result.best.fitness),
            format!("feasible = {}", self.result.best.feasible),
            format!("srl_bounds = {}", bounds.join(" ")),
        ]
    }
}
