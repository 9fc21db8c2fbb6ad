use std::path::Path;

use resgen_esmda::MdaConfig;
use resgen_flowsim::{five_spot_wells, DataChannels, FlowConfig, FluidSpec, NoiseSpec, RockSpec, Schedule, WellSpec};
use resgen_genmodels::{ModelConfig, ModelKind};
use resgen_geogen::{Case, DatasetParams, Grid};
use resgen_metrics::ClassifierConfig;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_dataset_seed")]
    pub seed: u64,
    #[serde(default)]
    pub params: DatasetParams,
}

fn default_count() -> usize {
    2000
}

fn default_dataset_seed() -> u64 {
    1
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            count: default_count(),
            seed: default_dataset_seed(),
            params: DatasetParams::default(),
        }
    }
}

/// Simulator settings; the grid comes from the experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub fluid: FluidSpec,
    pub rock: RockSpec,
    /// Five-spot pattern when absent.
    pub wells: Option<Vec<WellSpec>>,
    pub schedule: Schedule,
    pub channels: DataChannels,
    pub noise: NoiseSpec,
}

impl FlowSection {
    pub fn flow_config(&self, grid: Grid) -> FlowConfig {
        FlowConfig {
            grid,
            fluid: self.fluid,
            rock: self.rock,
            wells: self.wells.clone().unwrap_or_else(|| five_spot_wells(grid, 2)),
            schedule: self.schedule,
            channels: self.channels.clone(),
            noise: self.noise,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamMode {
    /// Update the latent vectors of the trained model.
    #[default]
    Latent,
    /// Update log-permeability directly.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssimilationSection {
    pub param: ParamMode,
    pub mda: MdaConfig,
    /// Seed of the prior realizations.
    pub prior_seed: u64,
    /// Seed of the reference ("true") realization.
    pub truth_seed: u64,
    /// Seed of the observation noise.
    pub noise_seed: u64,
    /// Seed of the per-iteration observation perturbations.
    pub update_seed: u64,
}

impl Default for AssimilationSection {
    fn default() -> Self {
        Self {
            param: ParamMode::Latent,
            mda: MdaConfig::default(),
            prior_seed: 1001,
            truth_seed: 2002,
            noise_seed: 3003,
            update_seed: 4004,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// Generated fields compared against the training set.
    pub samples: usize,
    /// Normalized value separating connected from disconnected cells.
    pub connectivity_threshold: f64,
    /// Fresh realizations, unseen in training, encoded together with the
    /// validation split for the latent statistics.
    pub latent_fields: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            samples: 300,
            connectivity_threshold: 0.0,
            latent_fields: 1000,
        }
    }
}

/// One experiment: dataset, classifier, generative model, simulator and
/// assimilation settings on a shared grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: Case,
    #[serde(default = "default_grid")]
    pub grid: Grid,
    /// Seed of model training; the other stages carry their own seeds.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub assimilation: AssimilationSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

fn default_grid() -> Grid {
    Grid::square(32)
}

impl ExperimentConfig {
    /// Desk-scale defaults for `case` and `kind`.
    pub fn desk(case: Case, kind: ModelKind) -> Self {
        Self {
            case,
            grid: default_grid(),
            seed: 0,
            dataset: DatasetSection::default(),
            classifier: ClassifierConfig::default(),
            model: ModelConfig::new(kind),
            flow: FlowSection::default(),
            assimilation: AssimilationSection::default(),
            metrics: MetricsSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Missing {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn flow_config(&self) -> FlowConfig {
        self.flow.flow_config(self.grid)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg = |e: &dyn std::fmt::Display| HarnessError::Config(e.to_string());
        self.grid.validate().map_err(|e| cfg(&e))?;
        self.model.validate().map_err(|e| cfg(&e))?;
        self.flow_config().validate().map_err(|e| cfg(&e))?;
        self.assimilation.mda.validate().map_err(|e| cfg(&e))?;
        if self.dataset.count < 4 {
            return Err(HarnessError::Config("dataset.count must be at least 4".into()));
        }
        if self.metrics.samples < 2 {
            return Err(HarnessError::Config("metrics.samples must be at least 2".into()));
        }
        Ok(())
    }
}
