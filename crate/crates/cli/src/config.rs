//! Experiment configuration: one JSON document, overridable field by field
//! from the command line.

use std::path::{Path, PathBuf};

use cabm::intensities::{Convention, SpinSign};
use cabm::simulator::{SimConfig, SimError};
use cabm::{DeltaWeight, ModelKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::suites::Suite;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<SimError> for ConfigError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig { field, reason } => ConfigError::invalid(field, reason),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Pfaffian,
    KernelTable,
    Intensity,
    Simulate,
    Validate,
    HeatCheck,
    FaceCheck,
    EpsilonScaling,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Pfaffian => "pfaffian",
            Task::KernelTable => "kernel-table",
            Task::Intensity => "intensity",
            Task::Simulate => "simulate",
            Task::Validate => "validate",
            Task::HeatCheck => "heat-check",
            Task::FaceCheck => "face-check",
            Task::EpsilonScaling => "epsilon-scaling",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    #[default]
    Abm,
    Cbm,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Abm => ModelKind::Abm,
            Model::Cbm => ModelKind::Cbm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Weight {
    #[default]
    SameParticle,
    Literal,
}

impl From<Weight> for DeltaWeight {
    fn from(w: Weight) -> Self {
        match w {
            Weight::SameParticle => DeltaWeight::SameParticle,
            Weight::Literal => DeltaWeight::Literal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Sign {
    #[default]
    Resolved,
    Literal,
}

impl From<Sign> for SpinSign {
    fn from(s: Sign) -> Self {
        match s {
            Sign::Resolved => SpinSign::Resolved,
            Sign::Literal => SpinSign::Literal,
        }
    }
}

/// `start:stop:step`, inclusive of `stop` up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    /// Grid points `start + i·step`; row order follows `i`.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, h] = parts.as_slice() else {
            return Err(format!("expected start:stop:step, got '{s}'"));
        };
        let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
        let grid = Grid {
            start: parse(a)?,
            stop: parse(b)?,
            step: parse(h)?,
        };
        if !(grid.start.is_finite() && grid.stop.is_finite()) || grid.stop < grid.start {
            return Err(format!("need finite start <= stop, got '{s}'"));
        }
        if !(grid.step > 0.0 && grid.step.is_finite()) {
            return Err(format!("step must be positive, got '{s}'"));
        }
        Ok(grid)
    }
}

impl TryFrom<String> for Grid {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Grid> for String {
    fn from(g: Grid) -> Self {
        format!("{}:{}:{}", g.start, g.stop, g.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSpec {
    pub t: f64,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSpec {
    /// Time of the first argument.
    pub t: f64,
    /// Time of the second argument; the equal-time kernel when absent.
    pub s: Option<f64>,
    pub grid: Grid,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            t: 1.0,
            s: None,
            grid: Grid {
                start: -3.0,
                stop: 3.0,
                step: 0.1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonSpec {
    pub s: f64,
    pub t: f64,
    pub z: f64,
    pub widths: Vec<f64>,
}

impl Default for EpsilonSpec {
    fn default() -> Self {
        Self {
            s: 1.0,
            t: 1.0 + 1e-4,
            z: 0.0,
            widths: vec![0.1, 0.05, 0.025],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: Option<Task>,
    pub model: Model,
    pub lambda: f64,
    pub half_width: f64,
    /// Defaults to `8√(last snapshot time)`.
    pub margin: Option<f64>,
    pub dt: f64,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    pub replicas: usize,
    pub delta_weight: Weight,
    pub spin_sign: Sign,
    /// Matrix CSV for the `pfaffian` task.
    pub matrix: Option<PathBuf>,
    pub kernel: KernelSpec,
    /// Intensity points as `[t, z]`.
    pub points: Vec<[f64; 2]>,
    pub spins: Option<SpinSpec>,
    pub suites: Vec<Suite>,
    pub epsilon: EpsilonSpec,
    /// Space step of the heat-equation stencil; halved for the Richardson ratio.
    pub heat_step: f64,
    pub out: Option<PathBuf>,
}

pub const DEFAULT_SEED: u64 = 20_240_601;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: None,
            model: Model::Abm,
            lambda: 100.0,
            half_width: 20.0,
            margin: None,
            dt: 1e-4,
            snapshot_times: vec![1.0],
            seed: DEFAULT_SEED,
            replicas: 20_000,
            delta_weight: Weight::SameParticle,
            spin_sign: Sign::Resolved,
            matrix: None,
            kernel: KernelSpec::default(),
            points: Vec::new(),
            spins: None,
            suites: Vec::new(),
            epsilon: EpsilonSpec::default(),
            heat_step: 1e-2,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(path: &Path, text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(path, &text)
    }

    pub fn convention(&self) -> Convention {
        Convention {
            delta: self.delta_weight.into(),
            spin_sign: self.spin_sign.into(),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let t_max = self.snapshot_times.iter().copied().fold(0.0, f64::max);
        SimConfig {
            model: self.model.into(),
            lambda: self.lambda,
            half_width: self.half_width,
            margin: self.margin.unwrap_or(8.0 * t_max.sqrt()),
            dt: self.dt,
            snapshot_times: self.snapshot_times.clone(),
            seed: self.seed,
        }
    }

    /// Field-level checks shared by every task; task-specific inputs are
    /// checked where they are used.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replicas < 2 {
            return Err(ConfigError::invalid("replicas", format!("need at least 2, got {}", self.replicas)));
        }
        if !(self.heat_step > 0.0 && self.heat_step.is_finite()) {
            return Err(ConfigError::invalid("heat_step", format!("must be positive, got {}", self.heat_step)));
        }
        if let Some(m) = self.margin {
            if !(m > 0.0 && m.is_finite()) {
                return Err(ConfigError::invalid("margin", format!("must be positive, got {m}")));
            }
        }
        self.sim_config().validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g: Grid = "-3:3:0.1".parse().unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 61);
        assert_eq!(pts[0], -3.0);
        assert!((pts[60] - 3.0).abs() < 1e-12);
        assert!("1:0:0.1".parse::<Grid>().is_err());
        assert!("0:1:0".parse::<Grid>().is_err());
        assert!("0:1".parse::<Grid>().is_err());
        assert!("a:1:0.1".parse::<Grid>().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = ExperimentConfig::from_json(Path::new("c.json"), "{\n  \"dt\": 1e-4,\n  \"bogus\": 1\n}").unwrap_err();
        match err {
            ConfigError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_dt_names_the_field() {
        let cfg = ExperimentConfig::from_json(Path::new("c.json"), r#"{"dt": -1.0}"#).unwrap();
        match cfg.validate().unwrap_err() {
            ConfigError::Invalid { field, .. } => assert_eq!(field, "dt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig {
            task: Some(Task::Validate),
            suites: vec![Suite::Density, Suite::TwoTime],
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(Path::new("x"), &text).unwrap(), cfg);
        cfg.validate().unwrap();
        assert_eq!(cfg.sim_config().margin, 8.0);
    }
}
