//! JSON run configuration shared by all subcommands. Each command reads
//! only the sections it needs; unknown fields anywhere are rejected.
//! Precedence for the seed and output directory: command-line flag, then
//! config field, then built-in default.

use std::path::{Path, PathBuf};

use avh_core::selftrain::PortionSchedule;
use avh_core::stats::CorrMethod;
use avh_core::synthdata::MixtureParams;
use avh_core::tinynet::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;

/// Offsets added to the run seed so each pipeline stage draws from its own
/// deterministic stream.
pub mod seeds {
    pub const DATA: u64 = 0;
    pub const MODEL: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const HSF: u64 = 3;
    pub const EVAL: u64 = 4;
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub gaussian: GaussianSection,
    pub mixture: MixtureSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub bins: BinsSection,
    pub correlate: CorrelateSection,
    pub selftrain: SelfTrainSection,
    pub sweep: SweepSection,
    pub gen_data: GenDataSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn effective_seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(DEFAULT_SEED)
    }

    pub fn effective_out(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Training settings with the run-derived seed patched in; the config's
    /// own `train.seed` is ignored so that `--seed` controls the whole run.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig, CliError> {
        let config = TrainConfig {
            seed: seed.wrapping_add(seeds::TRAIN),
            ..self.train
        };
        config.validate()?;
        Ok(config)
    }
}

/// Two overlapping Gaussian clouds for the toy demo; features are drawn
/// around the two means and normalized onto the unit sphere.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianSection {
    pub n: usize,
    pub dim: usize,
    pub mean_a: Vec<f64>,
    pub mean_b: Vec<f64>,
    pub sigma: f64,
}

impl Default for GaussianSection {
    fn default() -> Self {
        Self {
            n: 2000,
            dim: 3,
            mean_a: vec![1.0, 0.25, 0.3],
            mean_b: vec![0.25, 1.0, 0.3],
            sigma: 0.9,
        }
    }
}

impl GaussianSection {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.mean_a.len() != self.dim || self.mean_b.len() != self.dim {
            return Err(CliError::config(format!(
                "gaussian means must have dim {} entries",
                self.dim
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(CliError::config("gaussian sigma must be positive"));
        }
        if self.n == 0 || !self.n.is_multiple_of(2) {
            return Err(CliError::config("gaussian n must be even and positive"));
        }
        Ok(())
    }
}

/// Spherical Gaussian mixture parameters plus the simulated-annotator
/// count used to derive human-selection frequencies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureSection {
    pub num_classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub sigma: f64,
    pub n: usize,
    pub hsf_draws: usize,
}

impl Default for MixtureSection {
    fn default() -> Self {
        Self {
            num_classes: 4,
            dim: 8,
            separation: 1.3,
            sigma: 0.55,
            n: 2000,
            hsf_draws: 25,
        }
    }
}

impl MixtureSection {
    pub fn to_params(&self, seed: u64) -> Result<MixtureParams, CliError> {
        let params = MixtureParams {
            num_classes: self.num_classes,
            dim: self.dim,
            separation: self.separation,
            sigma: self.sigma,
            n: self.n,
            seed,
        };
        if self.hsf_draws == 0 {
            return Err(CliError::config("hsf_draws must be at least 1"));
        }
        Ok(params)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub layer_dims: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            layer_dims: vec![8, 64, 4],
        }
    }
}

impl ModelSection {
    /// Layer dims checked against the dataset the command will feed it.
    pub fn checked_dims(&self, input_dim: usize, classes: usize) -> Result<Vec<usize>, CliError> {
        if self.layer_dims.len() < 2 {
            return Err(CliError::config("model.layer_dims needs at least 2 entries"));
        }
        if self.layer_dims[0] != input_dim {
            return Err(CliError::config(format!(
                "model input dim {} does not match data dim {input_dim}",
                self.layer_dims[0]
            )));
        }
        if *self.layer_dims.last().unwrap() != classes {
            return Err(CliError::config(format!(
                "model class dim {} does not match data classes {classes}",
                self.layer_dims.last().unwrap()
            )));
        }
        Ok(self.layer_dims.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinsSection {
    /// Explicit strictly increasing edges; overrides `count` when set.
    pub edges: Option<Vec<f64>>,
    /// Number of equal-width bins over [0, 1].
    pub count: usize,
}

impl Default for BinsSection {
    fn default() -> Self {
        Self {
            edges: None,
            count: 5,
        }
    }
}

impl BinsSection {
    pub fn resolve(&self) -> Result<Vec<f64>, CliError> {
        if let Some(edges) = &self.edges {
            if edges.len() < 2 {
                return Err(CliError::config("bins.edges needs at least 2 entries"));
            }
            return Ok(edges.clone());
        }
        if self.count == 0 {
            return Err(CliError::config("bins.count must be at least 1"));
        }
        Ok((0..=self.count)
            .map(|i| i as f64 / self.count as f64)
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelateSection {
    /// Dataset CSV (must carry an hsf column). When absent, the command
    /// generates the default mixture and trains its own model.
    pub dataset: Option<PathBuf>,
    /// Model checkpoint JSON; required together with `dataset`.
    pub model: Option<PathBuf>,
    pub methods: Vec<CorrMethod>,
}

impl Default for CorrelateSection {
    fn default() -> Self {
        Self {
            dataset: None,
            model: None,
            methods: vec![CorrMethod::Spearman, CorrMethod::Pearson, CorrMethod::Kendall],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfTrainSection {
    /// Rotation (radians, coordinate plane 0-1) applied to the target means.
    pub rotation: f64,
    /// Constant shift applied to the target means along the last axis.
    pub shift: f64,
    /// Half-range of the per-sample log-uniform gain exp(U(-g, g)) applied
    /// to target features, modeling gain variation between domains. Scaling
    /// inflates softmax confidence but leaves angular scores untouched.
    pub gain_jitter: f64,
    pub rounds: usize,
    pub schedule: PortionSchedule,
    /// Seed for the target draw; defaults to the run seed's eval stream.
    pub target_seed: Option<u64>,
}

impl Default for SelfTrainSection {
    fn default() -> Self {
        Self {
            rotation: std::f64::consts::PI / 12.0,
            shift: 0.1,
            gain_jitter: 1.1,
            rounds: 5,
            schedule: PortionSchedule::default(),
            target_seed: None,
        }
    }
}

impl SelfTrainSection {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.rounds == 0 {
            return Err(CliError::config("selftrain.rounds must be at least 1"));
        }
        if !self.rotation.is_finite() || !self.shift.is_finite() {
            return Err(CliError::config("rotation and shift must be finite"));
        }
        if !(self.gain_jitter >= 0.0) || !self.gain_jitter.is_finite() {
            return Err(CliError::config("gain_jitter must be finite and >= 0"));
        }
        self.schedule.validate()?;
        Ok(())
    }
}

/// Binary norm-sweep configuration: the probe embedding sits at angle
/// `theta1` to the target row and `theta2` to the competing row, and is
/// scaled through a log-spaced alpha grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub theta1: f64,
    pub theta2: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_steps: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            theta1: std::f64::consts::FRAC_PI_4 - 0.05,
            theta2: std::f64::consts::FRAC_PI_4 + 0.05,
            alpha_min: 0.1,
            alpha_max: 100.0,
            alpha_steps: 25,
        }
    }
}

impl SweepSection {
    pub fn validate(&self) -> Result<(), CliError> {
        for theta in [self.theta1, self.theta2] {
            if !(theta > 0.0 && theta < std::f64::consts::PI) {
                return Err(CliError::config(format!(
                    "sweep angles must lie in (0, pi), got {theta}"
                )));
            }
        }
        if !(self.alpha_min > 0.0 && self.alpha_max > self.alpha_min) || !self.alpha_max.is_finite()
        {
            return Err(CliError::config("sweep needs 0 < alpha_min < alpha_max"));
        }
        if self.alpha_steps < 2 {
            return Err(CliError::config("sweep.alpha_steps must be at least 2"));
        }
        Ok(())
    }

    pub fn alphas(&self) -> Vec<f64> {
        let lo = self.alpha_min.ln();
        let hi = self.alpha_max.ln();
        (0..self.alpha_steps)
            .map(|i| (lo + (hi - lo) * i as f64 / (self.alpha_steps - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Mixture,
    TwoGaussians,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataSection {
    pub kind: DataKind,
}

impl Default for GenDataSection {
    fn default() -> Self {
        Self {
            kind: DataKind::Mixture,
        }
    }
}
