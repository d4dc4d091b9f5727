//! Versioned JSON experiment configs. Unknown keys are errors, not warnings.

use std::path::{Path, PathBuf};

use coderate::learn::{Normalization, OptimizerConfig};
use coderate::synth::SubspaceMixtureSpec;
use coderate::{LogBase, RateParams64};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

pub fn load<T: serde::de::DeserializeOwned + HasVersion>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let cfg: T = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if cfg.version() != CONFIG_VERSION {
        return Err(CliError::Config(format!(
            "{}: unsupported config version {} (expected {CONFIG_VERSION})",
            path.display(),
            cfg.version()
        )));
    }
    Ok(cfg)
}

pub trait HasVersion {
    fn version(&self) -> u32;
}

macro_rules! has_version {
    ($($t:ty),*) => {
        $(impl HasVersion for $t {
            fn version(&self) -> u32 {
                self.version
            }
        })*
    };
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub eps_sq: f64,
    #[serde(default)]
    pub log_base: LogBase,
}

impl RateConfig {
    pub fn params(&self, base_override: Option<LogBase>) -> Result<RateParams64, CliError> {
        RateParams64::new(self.eps_sq, base_override.unwrap_or(self.log_base))
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    Gaussian,
    Subspace,
}

/// One generator row of a simulation sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub id: String,
    pub kind: SpecKind,
    pub d: usize,
    pub k: usize,
    pub samples_per_class: usize,
    #[serde(default)]
    pub d_j: Option<usize>,
    #[serde(default)]
    pub orthogonal: Option<bool>,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        match self.kind {
            SpecKind::Gaussian => {
                if self.d_j.is_some() || self.orthogonal.is_some() {
                    return Err(CliError::Config(format!(
                        "spec {:?}: gaussian specs take no d_j/orthogonal fields",
                        self.id
                    )));
                }
            }
            SpecKind::Subspace => {
                if self.d_j.is_none() || self.orthogonal.is_none() {
                    return Err(CliError::Config(format!(
                        "spec {:?}: subspace specs need d_j and orthogonal",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn subspace_spec(&self, seed: u64) -> SubspaceMixtureSpec {
        SubspaceMixtureSpec {
            k: self.k,
            d: self.d,
            d_j: self.d_j.unwrap_or(1),
            samples_per_class: self.samples_per_class,
            orthogonal: self.orthogonal.unwrap_or(false),
            ambient_is_input: false,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub version: u32,
    pub rate: RateConfig,
    pub seeds: Vec<u64>,
    pub specs: Vec<GeneratorSpec>,
}

fn default_step_size() -> f64 {
    0.1
}
fn default_max_iters() -> usize {
    5000
}
fn default_tol() -> f64 {
    1e-8
}
fn default_normalization() -> Normalization {
    Normalization::UnitSphere
}
fn default_gamma() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default)]
    pub use_ctrl: bool,
    #[serde(default = "default_gamma")]
    pub gamma1: f64,
    #[serde(default = "default_gamma")]
    pub gamma2: f64,
}

impl OptimizerSettings {
    pub fn to_config(self, seed: u64) -> OptimizerConfig<f64> {
        OptimizerConfig {
            step_size: self.step_size,
            max_iters: self.max_iters,
            tol: self.tol,
            normalization: self.normalization,
            use_ctrl: self.use_ctrl,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            seed,
        }
    }
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            step_size: default_step_size(),
            max_iters: default_max_iters(),
            tol: default_tol(),
            normalization: default_normalization(),
            use_ctrl: false,
            gamma1: 1.0,
            gamma2: 1.0,
        }
    }
}

/// Where a command's features and labels come from: either a generator spec
/// or a pair of CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default)]
    pub generate: Option<GeneratorSpec>,
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.generate, &self.features, &self.labels) {
            (Some(spec), None, None) => spec.validate(),
            (None, Some(_), Some(_)) => Ok(()),
            _ => Err(CliError::Config(
                "source needs either `generate` or both `features` and `labels`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub version: u32,
    pub rate: RateConfig,
    pub source: SourceConfig,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoCirclesConfig {
    pub n_per_class: usize,
    pub r_inner: f64,
    pub r_outer: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub two_circles: Option<TwoCirclesConfig>,
    #[serde(default)]
    pub generate: Option<GeneratorSpec>,
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

impl DataConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.two_circles, &self.generate, &self.features, &self.labels) {
            (Some(_), None, None, None) => Ok(()),
            (None, Some(spec), None, None) => spec.validate(),
            (None, None, Some(_), Some(_)) => Ok(()),
            _ => Err(CliError::Config(
                "data needs exactly one of `two_circles`, `generate`, or `features`+`labels`"
                    .into(),
            )),
        }
    }
}

fn default_r_j() -> usize {
    coderate::metrics::DEFAULT_COMPONENTS
}
fn default_holdout() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    #[serde(default = "default_r_j")]
    pub r_j: usize,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            r_j: default_r_j(),
            holdout_fraction: default_holdout(),
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub layer_widths: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    pub rate: RateConfig,
    pub data: DataConfig,
    pub map: MapConfig,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub corruption_ratio: f64,
    #[serde(default)]
    pub corruption_seed: u64,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmeansConfig {
    pub k: usize,
    #[serde(default = "default_kmeans_iters")]
    pub max_iters: usize,
    #[serde(default = "default_kmeans_restarts")]
    pub restarts: usize,
}

fn default_kmeans_iters() -> usize {
    100
}
fn default_kmeans_restarts() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub version: u32,
    pub truth_labels: PathBuf,
    #[serde(default)]
    pub pred_labels: Option<PathBuf>,
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub kmeans: Option<KmeansConfig>,
    #[serde(default)]
    pub seed: u64,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.pred_labels, &self.features, &self.kmeans) {
            (Some(_), None, None) => Ok(()),
            (None, Some(_), Some(_)) => Ok(()),
            _ => Err(CliError::Config(
                "eval needs either `pred_labels` or both `features` and `kmeans`".into(),
            )),
        }
    }
}

has_version!(SimulateConfig, OptimizeConfig, TrainConfig, EvalConfig);
