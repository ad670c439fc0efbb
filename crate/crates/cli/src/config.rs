//! Experiment configuration: one TOML document per experiment.
//!
//! ```toml
//! case_path = "../crates/core/fixtures/ieee9.case"   # relative to this file
//! output_dir = "runs/ieee9"                           # relative to the working directory
//! emit_heatmaps = false
//!
//! [fluctuation]
//! relative_sigma = 0.002
//! injection_noise_sigma = 5e-5
//! artificial_noise_sigma = 1e-6
//! seed = 0
//! samples = 9600
//!
//! [estimation]
//! windows = [240, 4800]
//! outlier_threshold = 5.0
//!
//! [mlp]
//! enabled = true
//! layer_sizes = [14, 50, 50, 50, 14]
//! train_range = [0, 8400]
//! test_range = [8400, 9600]
//! epochs = 200
//!
//! [analytics]
//! num_factors = "spikes"     # or an integer
//! histogram_bins = 40
//!
//! [corruption]               # optional: error staged in the description
//! kind = "remove-duplicate"
//! from = 49
//! to = 66
//! ```

use std::path::{Path, PathBuf};

use gridtwin::estimation::OutlierRule;
use gridtwin::network::BranchEdit;
use gridtwin::neural::TrainConfig;
use gridtwin::telemetry::FluctuationConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// As written in the file; see [`ExperimentConfig::resolved_case_path`].
    pub case_path: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_heatmaps: bool,
    #[serde(default)]
    pub fluctuation: FluctuationConfig,
    #[serde(default)]
    pub estimation: EstimationSection,
    #[serde(default)]
    pub mlp: MlpSection,
    #[serde(default)]
    pub analytics: AnalyticsSection,
    /// Edit applied to the true network to form the description the
    /// benchmark is computed from.
    #[serde(default)]
    pub corruption: Option<BranchEdit<f64>>,
    /// Directory of the config file; relative case paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSection {
    /// LSE window lengths in samples, each starting at sample 0.
    pub windows: Vec<usize>,
    pub outlier_threshold: f64,
}

impl Default for EstimationSection {
    fn default() -> Self {
        EstimationSection {
            windows: vec![240, 4800],
            outlier_threshold: OutlierRule::default().threshold,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpSection {
    pub enabled: bool,
    pub layer_sizes: Vec<usize>,
    #[serde(flatten)]
    pub train: TrainConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumFactors {
    Rule(FactorRule),
    Count(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorRule {
    /// One factor per spike of the bias spectrum.
    Spikes,
}

impl NumFactors {
    pub fn fixed(self) -> Option<usize> {
        match self {
            NumFactors::Rule(FactorRule::Spikes) => None,
            NumFactors::Count(k) => Some(k),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsSection {
    pub num_factors: NumFactors,
    pub histogram_bins: usize,
}

impl Default for AnalyticsSection {
    fn default() -> Self {
        AnalyticsSection {
            num_factors: NumFactors::Rule(FactorRule::Spikes),
            histogram_bins: 40,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::parse(path, e))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolved_case_path(&self) -> PathBuf {
        self.base_dir.join(&self.case_path)
    }

    /// Replaces every stochastic stage's seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.fluctuation.seed = seed;
        self.mlp.train.seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.fluctuation.validate()?;
        let samples = self.fluctuation.samples;
        if let Some(&w) = self
            .estimation
            .windows
            .iter()
            .find(|&&w| w < 2 || w > samples)
        {
            return Err(CliError::Config(format!(
                "window {w} outside [2, {samples}]"
            )));
        }
        if !(self.estimation.outlier_threshold > 0.0) {
            return Err(CliError::Config(
                "outlier_threshold must be positive".into(),
            ));
        }
        if self.analytics.histogram_bins == 0 {
            return Err(CliError::Config("histogram_bins must be positive".into()));
        }
        if self.mlp.enabled {
            if self.mlp.layer_sizes.len() < 2 {
                return Err(CliError::Config(
                    "mlp.layer_sizes needs input and output layers".into(),
                ));
            }
            self.mlp
                .train
                .validate(samples)
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}
