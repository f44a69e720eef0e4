//! Experiment configuration files.
//!
//! A config is a JSON object with a `kind` field selecting the experiment,
//! an optional `name`, `seed` and `out`, and kind-specific parameters.
//! Matrices are nested row arrays.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use neurochan_core::design::AlphaScaling;
use neurochan_core::intermittency::InitialAvailability;
use neurochan_core::quantize::{Alphabet, GridSpec};
use neurochan_core::{io, ChannelSet, Plant};
use serde::Deserialize;

use crate::error::{CliError, Result};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(flatten)]
    pub experiment: Experiment,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Classify(ClassifyParams),
    Design(DesignParams),
    Certify(CertifyParams),
    Intermittency(IntermittencyParams),
    Uncertainty(UncertaintyParams),
    Frames(FramesParams),
    Emulate(EmulateParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Classify(_) => "classify",
            Experiment::Design(_) => "design",
            Experiment::Certify(_) => "certify",
            Experiment::Intermittency(_) => "intermittency",
            Experiment::Uncertainty(_) => "uncertainty",
            Experiment::Frames(_) => "frames",
            Experiment::Emulate(_) => "emulate",
        }
    }

    /// Kinds whose output depends on random draws.
    pub fn is_stochastic(&self) -> bool {
        match self {
            Experiment::Intermittency(_) | Experiment::Uncertainty(_) => true,
            Experiment::Frames(f) => f.jitter.is_some(),
            _ => false,
        }
    }
}

/// Either inline `a`/`b` or a `file` holding `{"a": .., "b": ..}`. Relative
/// paths are resolved against the config's directory.
#[derive(Debug, Default, Deserialize)]
pub struct PlantSpec {
    #[serde(default)]
    pub a: Option<Rows>,
    #[serde(default)]
    pub b: Option<Rows>,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

impl PlantSpec {
    pub fn resolve(&self, base: &Path) -> Result<Plant> {
        match (&self.file, &self.a, &self.b) {
            (Some(file), None, None) => {
                let path = base.join(file);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    CliError::Validation(format!("plant.file: cannot read {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Validation(format!("plant.file: {}: {e}", path.display()))
                })
            }
            (None, Some(a), Some(b)) => {
                let a = matrix("plant.a", a)?;
                let b = matrix("plant.b", b)?;
                Plant::new(a, b).map_err(|e| CliError::from_core("plant", e))
            }
            (Some(_), _, _) => Err(CliError::Validation(
                "plant: give either `file` or inline `a` and `b`, not both".into(),
            )),
            (None, None, _) => Err(CliError::Validation("plant.a: missing".into())),
            (None, _, None) => Err(CliError::Validation("plant.b: missing".into())),
        }
    }
}

/// How the lift `Â` is chosen.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftSpec {
    /// Minimum-norm lift.
    #[default]
    Particular,
    /// Lift with zero rows outside the listed one-based channels.
    Invariant(Vec<usize>),
    /// Explicit `m × n` matrix.
    Ahat(Rows),
}

pub fn matrix(field: &str, rows: &Rows) -> Result<DMatrix<f64>> {
    io::from_rows(rows).map_err(|e| CliError::from_core(field, e))
}

pub fn vector(field: &str, values: &[f64], len: usize) -> Result<DVector<f64>> {
    if values.len() != len {
        return Err(CliError::Validation(format!(
            "{field}: expected {len} entries, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Validation(format!(
            "{field}: entries must be finite"
        )));
    }
    Ok(DVector::from_column_slice(values))
}

pub fn channels(field: &str, m: usize, labels: &[usize]) -> Result<ChannelSet> {
    ChannelSet::from_one_based(m, labels).map_err(|e| CliError::from_core(field, e))
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
pub struct ClassifyParams {
    pub plant: PlantSpec,
    /// Gramian horizon.
    #[serde(default = "one")]
    pub horizon: f64,
}

/// Target spectrum for one channel pair, eigenvalues as `[re, im]`.
#[derive(Debug, Deserialize)]
pub struct TargetSpec {
    pub channels: Vec<usize>,
    pub eigenvalues: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
pub struct DesignParams {
    pub plant: PlantSpec,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub scaling: AlphaScaling,
    #[serde(default)]
    pub lift: LiftSpec,
    #[serde(default)]
    pub x_g: Option<Vec<f64>>,
    /// Analyse this `K` instead of building one.
    #[serde(default)]
    pub gain: Option<Rows>,
    /// Solve for `K` placing these spectra (2 states, 3 channels).
    #[serde(default)]
    pub targets: Option<Vec<TargetSpec>>,
    /// Smallest subset size in the scan; defaults to `n`.
    #[serde(default)]
    pub j_min: Option<usize>,
}

#[derive(Debug, Deserialize)]
pub struct CertifyParams {
    pub plant: PlantSpec,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub scaling: AlphaScaling,
    #[serde(default)]
    pub lift: LiftSpec,
    #[serde(default)]
    pub x_g: Option<Vec<f64>>,
    /// One-based channels of the root set `I`.
    pub root: Vec<usize>,
}

fn default_dt() -> f64 {
    neurochan_core::intermittency::DEFAULT_DT
}

fn default_runs() -> usize {
    100
}

fn default_threshold() -> f64 {
    0.01
}

#[derive(Debug, Deserialize)]
pub struct IntermittencyParams {
    pub plant: PlantSpec,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub scaling: AlphaScaling,
    #[serde(default)]
    pub lift: LiftSpec,
    #[serde(default)]
    pub x_g: Option<Vec<f64>>,
    pub x0: Vec<f64>,
    /// Rate from unavailable to available.
    pub delta: f64,
    /// Rate from available to unavailable.
    pub epsilon: f64,
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Seeds `seed, seed+1, …` are used for the batch.
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// A run counts as contracted when `‖x(T)‖ < threshold·‖x(0)‖`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub initial: InitialAvailability,
}

fn default_trials() -> usize {
    100_000
}

#[derive(Debug, Deserialize)]
pub struct UncertaintyParams {
    pub plant: PlantSpec,
    /// One result row per value.
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub scaling: AlphaScaling,
    #[serde(default)]
    pub lift: LiftSpec,
    /// Channel noise covariance; identity when absent.
    #[serde(default)]
    pub sigma: Option<Rows>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Extra channels `b` to evaluate by augmentation.
    #[serde(default)]
    pub augment: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
pub struct JitterSpec {
    pub m: usize,
    /// Maximum angular perturbation in units of `1/m` radians.
    pub scale: f64,
    pub samples: usize,
}

#[derive(Debug, Deserialize)]
pub struct FramesParams {
    #[serde(default)]
    pub circle: Vec<usize>,
    /// Angle counts `[N₁, …, N_{n−1}]` per sphere frame.
    #[serde(default)]
    pub sphere: Vec<Vec<usize>>,
    #[serde(default)]
    pub jitter: Option<JitterSpec>,
}

#[derive(Debug, Deserialize)]
pub struct TargetParams {
    #[serde(rename = "H")]
    pub h: Rows,
    pub step: f64,
    pub alphabet: Alphabet,
    #[serde(default)]
    pub column_weights: Option<Vec<f64>>,
}

fn default_ball() -> f64 {
    0.2
}

#[derive(Debug, Deserialize)]
pub struct EmulateParams {
    pub plant: PlantSpec,
    pub target: TargetParams,
    pub x0: Vec<f64>,
    pub steps: usize,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Also evaluate the `{−1, 0, +1}` alphabet on the grid.
    #[serde(default)]
    pub compare_gated: bool,
    /// Radius reported in the summary's ball-entry statistic.
    #[serde(default = "default_ball")]
    pub ball_radius: f64,
}

/// Parses a config document.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_inline_plant() {
        let c = parse(r#"{"kind":"classify","plant":{"a":[[0,1],[0,0]],"b":[[0,1,1],[1,0,1]]}}"#)
            .unwrap();
        let Experiment::Classify(p) = c.experiment else {
            panic!("wrong kind")
        };
        assert_eq!(p.horizon, 1.0);
        assert_eq!(p.plant.resolve(Path::new(".")).unwrap().m(), 3);
    }

    #[test]
    fn lift_variants() {
        let c = parse(
            r#"{"kind":"certify","plant":{"a":[[0]],"b":[[1,1]]},"lift":{"invariant":[1]},"root":[1]}"#,
        )
        .unwrap();
        let Experiment::Certify(p) = c.experiment else {
            panic!("wrong kind")
        };
        assert!(matches!(p.lift, LiftSpec::Invariant(ref v) if v == &[1]));
        let c = parse(
            r#"{"kind":"certify","plant":{"a":[[0]],"b":[[1,1]]},"lift":"particular","root":[1]}"#,
        )
        .unwrap();
        assert!(matches!(
            c.experiment,
            Experiment::Certify(CertifyParams {
                lift: LiftSpec::Particular,
                ..
            })
        ));
    }

    #[test]
    fn missing_plant_parts_name_the_field() {
        let spec = PlantSpec {
            a: Some(vec![vec![0.0]]),
            ..Default::default()
        };
        let err = spec.resolve(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("plant.b"));
        let spec = PlantSpec {
            file: Some("does-not-exist.json".into()),
            ..Default::default()
        };
        let err = spec.resolve(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("plant.file"));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!(parse(r#"{"kind":"teleport"}"#).is_err());
    }
}
