//! Experiment configuration: a TOML file (plain `key = value` lines grouped
//! in sections). Every section and key is optional; missing values take the
//! desk-scale defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use groupbeam_core::array::{AzimuthRange, UpaGeometry, VerticalPrior};
use groupbeam_core::beam::{
    build_group_beam_matrix, random_beam_matrix, wide_beam_matrix, AnalogBeamMatrix, GroupingPattern,
    SubIntervalPartition,
};
use groupbeam_core::estimator::{DynamicGrid, EstimatorConfig, EstimatorKind};
use groupbeam_core::metrics::SidelobeRegion;
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BeamKind {
    /// Group-wise narrow beams with an optimized pattern read from a file.
    GroupOpt,
    /// Group-wise narrow beams, contiguous equal column blocks.
    GroupUniform,
    Random,
    Wide,
}

impl BeamKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GroupOpt => "group-opt",
            Self::GroupUniform => "group-uniform",
            Self::Random => "random",
            Self::Wide => "wide",
        }
    }
}

impl fmt::Display for BeamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BeamKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group-opt" | "group-wise-opt" => Ok(Self::GroupOpt),
            "group-uniform" | "group-wise-uniform" => Ok(Self::GroupUniform),
            "random" => Ok(Self::Random),
            "wide" => Ok(Self::Wide),
            other => Err(Error::Config(format!("unknown beam kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    SnrDb,
    KPaths,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub k_paths: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdaSettings {
    pub q: usize,
    pub t: usize,
    pub i_max: usize,
    /// Noise standard deviation of the SRL constraint.
    pub sigma: f64,
    /// Bounds are `slack` times the median random-pattern SRL.
    pub slack: f64,
    pub calibration_patterns: usize,
    pub seed: u64,
    pub region: SidelobeRegion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: UpaGeometry,
    pub prior: VerticalPrior,
    pub azimuth: AzimuthRange,
    pub groups: usize,
    pub beams: Vec<BeamKind>,
    /// Resolved path of the optimized grouping pattern.
    pub pattern_file: Option<PathBuf>,
    pub random_beam_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    /// Expected path count given to the estimators; `None` uses the true
    /// path count of the sweep point.
    pub k_expected: Option<usize>,
    pub grid: (usize, usize),
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    pub trials: usize,
    pub base_seed: u64,
    pub eda: EdaSettings,
    pub bench_repetitions: usize,
    pub bench_warmups: usize,
    pub af_sin_theta: f64,
    pub af_points: usize,
    pub output_dir: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    geometry: RawGeometry,
    #[serde(default)]
    prior: RawPrior,
    #[serde(default)]
    beam: RawBeam,
    #[serde(default)]
    estimator: RawEstimator,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    eda: RawEda,
    #[serde(default)]
    bench: RawBench,
    #[serde(default)]
    af: RawAf,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    profile: Option<String>,
    n_y: Option<usize>,
    n_z: Option<usize>,
    m: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    sin_lo: Option<f64>,
    sin_hi: Option<f64>,
    azimuth_sin_lo: Option<f64>,
    azimuth_sin_hi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBeam {
    groups: Option<usize>,
    kinds: Option<Vec<String>>,
    pattern: Option<PathBuf>,
    random_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    kinds: Option<Vec<String>>,
    k_expected: Option<usize>,
    l1: Option<usize>,
    l2: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: Option<String>,
    values: Option<Vec<f64>>,
    snr_db: Option<f64>,
    k_paths: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEda {
    q: Option<usize>,
    t: Option<usize>,
    i_max: Option<usize>,
    sigma: Option<f64>,
    slack: Option<f64>,
    calibration_patterns: Option<usize>,
    seed: Option<u64>,
    region_a: Option<f64>,
    region_b: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBench {
    repetitions: Option<usize>,
    warmups: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAf {
    sin_theta: Option<f64>,
    points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// Minimum repetitions of a timing run.
pub const MIN_BENCH_REPETITIONS: usize = 10;

impl ExperimentConfig {
    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::resolve(raw, base_dir)
    }

    /// Desk-scale defaults (what an empty file gives).
    pub fn desk() -> Self {
        Self::resolve(RawConfig::default(), Path::new(".")).expect("defaults are valid")
    }

    fn resolve(raw: RawConfig, base_dir: &Path) -> Result<Self> {
        let g = &raw.geometry;
        let profile = match g.profile.as_deref().unwrap_or("desk") {
            "desk" => UpaGeometry::desk(),
            "paper" => UpaGeometry::paper(),
            other => return Err(Error::Config(format!("unknown geometry profile '{other}'"))),
        };
        let geometry = UpaGeometry::new(
            g.n_y.unwrap_or(profile.n_y()),
            g.n_z.unwrap_or(profile.n_z()),
            g.m.unwrap_or(profile.m()),
        )?;

        let d_prior = VerticalPrior::default();
        let prior = VerticalPrior::new(
            raw.prior.sin_lo.unwrap_or(d_prior.sin_lo()),
            raw.prior.sin_hi.unwrap_or(d_prior.sin_hi()),
        )?;
        let d_az = AzimuthRange::default();
        let azimuth = AzimuthRange::new(
            raw.prior.azimuth_sin_lo.unwrap_or(d_az.sin_lo()),
            raw.prior.azimuth_sin_hi.unwrap_or(d_az.sin_hi()),
        )?;

        let groups = raw.beam.groups.unwrap_or(4);
        if groups == 0 || groups > geometry.n_y() {
            return Err(Error::Config(format!("group count {groups} must be in 1..={}", geometry.n_y())));
        }
        let beams: Vec<BeamKind> = match &raw.beam.kinds {
            Some(k) => k.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            None => vec![BeamKind::GroupUniform],
        };
        if beams.is_empty() {
            return Err(Error::Config("beam.kinds is empty".into()));
        }
        let pattern_file = raw.beam.pattern.as_ref().map(|p| base_dir.join(p));
        if let Some(p) = &pattern_file {
            if !p.is_file() {
                return Err(Error::Config(format!("pattern file {} does not exist", p.display())));
            }
        } else if beams.contains(&BeamKind::GroupOpt) {
            return Err(Error::Config("beam kind group-opt needs beam.pattern".into()));
        }

        let estimators: Vec<EstimatorKind> = match &raw.estimator.kinds {
            Some(k) => k
                .iter()
                .map(|s| s.parse().map_err(|e: groupbeam_core::Error| Error::Config(e.to_string())))
                .collect::<Result<_>>()?,
            None => EstimatorKind::ALL.to_vec(),
        };
        if estimators.is_empty() {
            return Err(Error::Config("estimator.kinds is empty".into()));
        }
        let (d_l1, d_l2) = DynamicGrid::default_sizes(geometry.n_y());
        let grid = (raw.estimator.l1.unwrap_or(d_l1), raw.estimator.l2.unwrap_or(d_l2));
        if grid.0 == 0 || grid.1 == 0 {
            return Err(Error::Config("grid sizes must be positive".into()));
        }

        let s = &raw.sweep;
        let snr_db = s.snr_db.unwrap_or(10.0);
        let k_paths = s.k_paths.unwrap_or(10);
        let axis = match s.axis.as_deref().unwrap_or("snr_db") {
            "snr_db" => SweepAxis::SnrDb,
            "k_paths" => SweepAxis::KPaths,
            other => return Err(Error::Config(format!("unknown sweep axis '{other}'"))),
        };
        let points: Vec<SweepPoint> = match (axis, &s.values) {
            (SweepAxis::SnrDb, None) => vec![SweepPoint { snr_db, k_paths }],
            (SweepAxis::KPaths, None) => vec![SweepPoint { snr_db, k_paths }],
            (SweepAxis::SnrDb, Some(v)) => v.iter().map(|&x| SweepPoint { snr_db: x, k_paths }).collect(),
            (SweepAxis::KPaths, Some(v)) => v
                .iter()
                .map(|&x| {
                    if x >= 1.0 && x.fract() == 0.0 {
                        Ok(SweepPoint { snr_db, k_paths: x as usize })
                    } else {
                        Err(Error::Config(format!("path count {x} is not a positive integer")))
                    }
                })
                .collect::<Result<_>>()?,
        };
        if points.is_empty() {
            return Err(Error::Config("sweep.values is empty".into()));
        }
        if points.iter().any(|p| p.k_paths == 0 || !p.snr_db.is_finite()) {
            return Err(Error::Config("sweep points need k_paths >= 1 and finite SNR".into()));
        }
        let trials = s.trials.unwrap_or(100);
        if trials == 0 {
            return Err(Error::Config("sweep.trials must be at least 1".into()));
        }
        if raw.estimator.k_expected == Some(0) {
            return Err(Error::Config("estimator.k_expected must be at least 1".into()));
        }

        let e = &raw.eda;
        let region = match (e.region_a, e.region_b) {
            (None, None) => SidelobeRegion::default_for(geometry.n_y()),
            (a, b) => {
                let d = SidelobeRegion::default_for(geometry.n_y());
                SidelobeRegion::new(a.unwrap_or(d.a()), b.unwrap_or(d.b()))?
            }
        };
        let eda = EdaSettings {
            q: e.q.unwrap_or(200),
            t: e.t.unwrap_or(40),
            i_max: e.i_max.unwrap_or(50),
            sigma: e.sigma.unwrap_or(0.18),
            slack: e.slack.unwrap_or(1.1),
            calibration_patterns: e.calibration_patterns.unwrap_or(200),
            seed: e.seed.unwrap_or(1),
            region,
        };
        if !(eda.t >= 1 && eda.t < eda.q && eda.i_max >= 1 && eda.sigma > 0.0 && eda.slack > 0.0)
            || eda.calibration_patterns == 0
        {
            return Err(Error::Config("eda needs 1 <= t < q, i_max >= 1, sigma > 0, slack > 0".into()));
        }

        let bench_repetitions = raw.bench.repetitions.unwrap_or(MIN_BENCH_REPETITIONS);
        if bench_repetitions < MIN_BENCH_REPETITIONS {
            return Err(Error::Config(format!(
                "bench.repetitions must be at least {MIN_BENCH_REPETITIONS}"
            )));
        }
        let af_points = raw.af.points.unwrap_or(128);
        if af_points < 2 {
            return Err(Error::Config("af.points must be at least 2".into()));
        }

        Ok(Self {
            geometry,
            prior,
            azimuth,
            groups,
            beams,
            pattern_file,
            random_beam_seed: raw.beam.random_seed.unwrap_or(7),
            estimators,
            k_expected: raw.estimator.k_expected,
            grid,
            axis,
            points,
            trials,
            base_seed: s.seed.unwrap_or(1),
            eda,
            bench_repetitions,
            bench_warmups: raw.bench.warmups.unwrap_or(2),
            af_sin_theta: raw.af.sin_theta.unwrap_or(0.0),
            af_points,
            output_dir: base_dir.join(raw.output.dir.unwrap_or_else(|| PathBuf::from("."))),
        })
    }

    pub fn partition(&self) -> Result<SubIntervalPartition> {
        Ok(SubIntervalPartition::uniform(&self.prior, self.groups)?)
    }

    /// Grouping pattern behind a group-wise beam kind.
    pub fn pattern(&self, kind: BeamKind) -> Result<GroupingPattern> {
        match kind {
            BeamKind::GroupOpt => {
                let path = self
                    .pattern_file
                    .as_ref()
                    .ok_or_else(|| Error::Config("no pattern file configured".into()))?;
                let (pattern, _) = GroupingPattern::read_csv(std::fs::File::open(path)?)?;
                if pattern.n_y() != self.geometry.n_y() || pattern.g() != self.groups {
                    return Err(Error::Config(format!(
                        "pattern {} is {}x{}, config needs {}x{}",
                        path.display(),
                        pattern.n_y(),
                        pattern.g(),
                        self.geometry.n_y(),
                        self.groups
                    )));
                }
                Ok(pattern)
            }
            BeamKind::GroupUniform => Ok(GroupingPattern::uniform_contiguous(self.geometry.n_y(), self.groups)?),
            other => Err(Error::Config(format!("beam kind {other} has no grouping pattern"))),
        }
    }

    pub fn beam(&self, kind: BeamKind) -> Result<AnalogBeamMatrix> {
        match kind {
            BeamKind::GroupOpt | BeamKind::GroupUniform => {
                Ok(build_group_beam_matrix(&self.partition()?, &self.pattern(kind)?, &self.geometry)?)
            }
            BeamKind::Random => Ok(random_beam_matrix(&self.geometry, self.random_beam_seed)),
            BeamKind::Wide => Ok(wide_beam_matrix(&self.prior, &self.geometry)),
        }
    }

    pub fn dynamic_grid(&self) -> Result<DynamicGrid> {
        let part = self.partition()?;
        Ok(DynamicGrid::uniform(self.grid.0, self.grid.1, &self.azimuth, &self.prior, Some(&part))?)
    }

    pub fn estimator_config(&self, k_paths: usize) -> EstimatorConfig {
        let mut cfg = EstimatorConfig::new(self.k_expected.unwrap_or(k_paths));
        cfg.azimuth = self.azimuth;
        cfg.prior = self.prior;
        cfg
    }
}
