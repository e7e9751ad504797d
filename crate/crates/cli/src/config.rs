//! The declarative run configuration.
//!
//! Precedence, lowest to highest: built-in defaults, the TOML file given
//! with `--config`, command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use eapred::data::{SplitFractions, SyntheticSpec};
use eapred::evaluation::CostMatrix;
use eapred::features::FeatureMask;
use eapred::labeling::DEFAULT_TAU;
use eapred::models::{AttentionConfig, LstmConfig, ModelKind};
use eapred::pipeline::ExperimentConfig;
use eapred::sentiment::{InputText, ProviderConfig};
use eapred::training::{TrainConfig, WeightMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Kind};

/// Where the dataset comes from. At most one source may be set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSource {
    /// Directory holding prices.csv, fundamentals.csv, news.jsonl and events.csv.
    pub dir: Option<PathBuf>,
    /// A dataset store written by `ingest` or `synth`.
    pub store: Option<PathBuf>,
    /// Parameters for generated data; its seed is replaced by the run seed.
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub tau: f64,
    pub window_len: usize,
    pub model: ModelKind,
    /// Include the sentiment block (d = 21) or drop it (d = 18).
    pub sentiment: bool,
    pub data: DataSource,
    pub split: SplitFractions,
    pub sentiment_provider: ProviderConfig,
    pub weights: WeightMode,
    pub train: TrainConfig,
    pub lstm: LstmConfig,
    pub attention: AttentionConfig,
    pub cost: CostMatrix,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs"),
            tau: DEFAULT_TAU,
            window_len: 30,
            model: ModelKind::Lstm,
            sentiment: true,
            data: DataSource::default(),
            split: SplitFractions::default(),
            sentiment_provider: ProviderConfig::Lexicon {
                input: InputText::default(),
            },
            weights: WeightMode::InverseFrequency,
            train: TrainConfig::default(),
            lstm: LstmConfig::default(),
            attention: AttentionConfig::default(),
            cost: CostMatrix::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).map_err(|e| CliError::new(Kind::Input, format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::new(Kind::Config, format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::new(Kind::Config, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let config = |m: String| Err(CliError::new(Kind::Config, m));
        let d = &self.data;
        if [d.dir.is_some(), d.store.is_some(), d.synthetic.is_some()].iter().filter(|&&b| b).count() > 1 {
            return config("set at most one of data.dir, data.store and data.synthetic".into());
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return config(format!("tau must be positive, got {}", self.tau));
        }
        if self.window_len == 0 {
            return config("window_len must be positive".into());
        }
        self.split.validate().map_err(|e| CliError::new(Kind::Config, e.to_string()))?;
        self.train.validate().map_err(|e| CliError::new(Kind::Config, e.to_string()))?;
        self.cost.validate().map_err(|e| CliError::new(Kind::Config, e.to_string()))?;
        let exp = self.experiment();
        for mask in [FeatureMask::WithSentiment, FeatureMask::WithoutSentiment] {
            exp.model_config(mask).validate().map_err(|e| CliError::new(Kind::Config, e.to_string()))?;
        }
        Ok(())
    }

    pub fn mask(&self) -> FeatureMask {
        if self.sentiment {
            FeatureMask::WithSentiment
        } else {
            FeatureMask::WithoutSentiment
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            seed: self.seed,
            tau: self.tau,
            split: self.split,
            window_len: self.window_len,
            sentiment: self.sentiment_provider.clone(),
            model: self.model,
            lstm: self.lstm.clone(),
            attention: self.attention.clone(),
            weights: self.weights.clone(),
            train: self.train.clone(),
            cost: self.cost,
        }
    }

    /// Synthetic parameters with the run seed applied.
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            seed: self.seed,
            ..self.data.synthetic.clone().unwrap_or_default()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize")
    }

    /// SHA-256 of the canonical JSON form, ignoring `output_dir`; identifies the run.
    pub fn digest(&self) -> String {
        let canonical = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("run configs serialize");
        hex::encode(Sha256::digest(json))
    }
}
