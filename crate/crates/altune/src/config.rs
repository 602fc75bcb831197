//! Experiment configuration: one TOML file, every field defaulted, flags
//! override file values.

use std::path::{Path, PathBuf};

use altune_core::beamsim::{DatasetConfig, DriftSchedule};
use altune_core::net::{NetworkSpec, TrainSchedule};
use altune_core::tuner::{ShiftConfig, ShiftKind, TuningConfig};
use altune_core::AxisPair;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "ALTUNE_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Training-set size for `gen-data`.
    pub n_samples: usize,
    pub dataset: DatasetConfig,
    pub network: NetworkSpec,
    pub training: TrainSchedule,
    pub tuning: TuningConfig,
    pub drift: DriftSchedule,
    pub shift: ShiftConfig,
    /// Shift applied to the true system by `tune`.
    pub scenario: ShiftKind,
    /// Seeds the shift direction of the tuning scenario.
    pub scenario_seed: u64,
    /// Seeds each scenario's out-of-range test population.
    pub test_seed: u64,
    /// Relative measurement noise on the observable image (0 = exact).
    pub measurement_noise: f64,
    pub noise_seed: u64,
    /// Hidden projections scored by the evaluator.
    pub hidden_pairs: Vec<AxisPair>,
    pub observable_pair: AxisPair,
    /// Training images (at most this many) used to fit the PCA diagnostic.
    pub pca_train_samples: usize,
    pub pca_components: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let network = NetworkSpec::default();
        ExperimentConfig {
            n_samples: 5000,
            dataset: DatasetConfig::default(),
            tuning: TuningConfig::latent_default(network.latent_dim),
            network,
            training: TrainSchedule::default(),
            drift: DriftSchedule::default(),
            shift: ShiftConfig::default(),
            scenario: ShiftKind::Near,
            scenario_seed: 1,
            test_seed: 9001,
            measurement_noise: 0.0,
            noise_seed: 3,
            hidden_pairs: vec![AxisPair::X_XP, AxisPair::Y_YP],
            observable_pair: AxisPair::Z_E,
            pca_train_samples: 1000,
            pca_components: 15,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// The file at `path` if given, else defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Checks every section, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate().context("invalid [dataset]")?;
        self.network.validate().context("invalid [network]")?;
        self.training.validate().context("invalid [training]")?;
        self.tuning.validate().context("invalid [tuning]")?;
        self.drift.validate().context("invalid [drift]")?;
        self.shift.validate().context("invalid [shift]")?;
        if self.n_samples == 0 {
            bail!("invalid n_samples: must be positive");
        }
        if self.network.channels != self.dataset.channels {
            bail!(
                "invalid network.channels: {:?} differs from dataset.channels {:?}",
                self.network.channels,
                self.dataset.channels
            );
        }
        if self.network.input_size != self.dataset.grid.input_size
            || self.network.output_size() != self.dataset.grid.output_size
        {
            bail!(
                "invalid network: input/output sizes {}/{} do not match dataset.grid {}/{}",
                self.network.input_size,
                self.network.output_size(),
                self.dataset.grid.input_size,
                self.dataset.grid.output_size
            );
        }
        if self.network.axis_extents != self.dataset.grid.axis_extents {
            bail!("invalid network.axis_extents: must equal dataset.grid.axis_extents");
        }
        if self.tuning.es.dim() != self.network.latent_dim {
            bail!(
                "invalid tuning.es.ratios: {} ratios for a latent dimension of {}",
                self.tuning.es.dim(),
                self.network.latent_dim
            );
        }
        for pair in self.hidden_pairs.iter().chain(std::iter::once(&self.observable_pair)) {
            if !self.network.channels.contains(pair) {
                bail!("invalid pair {pair}: not among the network channels");
            }
        }
        if !(self.measurement_noise >= 0.0 && self.measurement_noise.is_finite()) {
            bail!("invalid measurement_noise: {} must be non-negative", self.measurement_noise);
        }
        Ok(())
    }

    /// Output root: the config value, then `$ALTUNE_OUT`, then `altune-out`.
    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("altune-out"))
    }
}
