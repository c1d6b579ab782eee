//! Experiment harness: configuration, paired Monte-Carlo sweeps, timing
//! runs and curve export on top of `groupbeam-core`.

pub mod bench;
pub mod config;
pub mod curves;
pub mod error;
pub mod grouping;
pub mod stats;
pub mod sweep;

pub use config::{BeamKind, ExperimentConfig, SweepAxis, SweepPoint};
pub use error::{Error, Result};
