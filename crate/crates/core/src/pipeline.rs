//! Composition of the stages: split, prepare, train, evaluate.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{split, DataError, Dataset, SplitFractions};
use crate::evaluation::{ablation_report, AblationReport, CostMatrix, EvalError, EvaluationReport, ReportMeta};
use crate::exec::Execution;
use crate::features::{prepare, FeatureError, FeatureMask, PrepareConfig, PreparedSplits, Sample};
use crate::labeling::{distribution, Direction, LabelError, DEFAULT_TAU};
use crate::models::{AttentionConfig, LstmConfig, ModelConfig, ModelError, ModelKind, ModelParams};
use crate::numerics::{NumericsError, Tensor};
use crate::sentiment::{InputText, ProviderConfig, SentimentError};
use crate::training::{class_weights, predict_all, train, Control, EpochLog, Example, LossSpec, TrainConfig, TrainError, TrainLog, WeightMode};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Coarse failure classes, used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Config,
    Numerical,
    Comparability,
    Other,
}

impl PipelineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            PipelineError::Data(DataError::Config(_)) => ErrorKind::Config,
            PipelineError::Data(_) | PipelineError::Label(_) => ErrorKind::Input,
            PipelineError::Sentiment(SentimentError::Config(_)) => ErrorKind::Config,
            PipelineError::Sentiment(_) => ErrorKind::Input,
            PipelineError::Features(FeatureError::Config(_)) => ErrorKind::Config,
            PipelineError::Features(FeatureError::Numerics(NumericsError::NonFinite { .. })) => ErrorKind::Numerical,
            PipelineError::Features(_) => ErrorKind::Input,
            PipelineError::Model(ModelError::Config(_)) => ErrorKind::Config,
            PipelineError::Model(ModelError::Checkpoint { .. }) => ErrorKind::Input,
            PipelineError::Model(_) => ErrorKind::Other,
            PipelineError::Train(TrainError::NonFinite { .. } | TrainError::NonFiniteGradient(_)) => ErrorKind::Numerical,
            PipelineError::Train(TrainError::Config(_) | TrainError::Weights(_)) => ErrorKind::Config,
            PipelineError::Train(_) => ErrorKind::Other,
            PipelineError::Eval(EvalError::Comparability(_)) => ErrorKind::Comparability,
            PipelineError::Eval(EvalError::Cost(_)) => ErrorKind::Config,
            PipelineError::Eval(_) => ErrorKind::Input,
            PipelineError::Numerics(NumericsError::NonFinite { .. }) => ErrorKind::Numerical,
            PipelineError::Numerics(_) => ErrorKind::Other,
        }
    }
}

/// Everything that determines a run apart from the dataset itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub tau: f64,
    pub split: SplitFractions,
    pub window_len: usize,
    pub sentiment: ProviderConfig,
    pub model: ModelKind,
    pub lstm: LstmConfig,
    pub attention: AttentionConfig,
    pub weights: WeightMode,
    pub train: TrainConfig,
    pub cost: CostMatrix,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tau: DEFAULT_TAU,
            split: SplitFractions::default(),
            window_len: PrepareConfig::default().window_len,
            sentiment: ProviderConfig::Lexicon {
                input: InputText::default(),
            },
            model: ModelKind::Lstm,
            lstm: LstmConfig::default(),
            attention: AttentionConfig::default(),
            weights: WeightMode::InverseFrequency,
            train: TrainConfig::default(),
            cost: CostMatrix::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn prepare_config(&self) -> PrepareConfig {
        PrepareConfig {
            window_len: self.window_len,
            tau: self.tau,
        }
    }

    /// Model layout for one feature mask. Initialisation draws from the run seed.
    pub fn model_config(&self, mask: FeatureMask) -> ModelConfig {
        let mut m = ModelConfig::new(self.model, mask.dim(), self.window_len);
        m.lstm = self.lstm.clone();
        m.attention = self.attention.clone();
        m.seed = self.seed;
        m
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

/// Splits the dataset in time and builds scaled windows for every split.
pub fn prepare_dataset(dataset: &Dataset, cfg: &ExperimentConfig, exec: Execution) -> Result<PreparedSplits, PipelineError> {
    let splits = split(dataset, &cfg.split)?;
    let provider = cfg.sentiment.build()?;
    Ok(prepare(dataset, &splits, provider.as_ref(), &cfg.prepare_config(), exec)?)
}

/// Model inputs for one split under one feature mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedSplit {
    pub xs: Vec<Tensor>,
    pub ys: Vec<Direction>,
}

impl MaskedSplit {
    pub fn from_samples(samples: &[Sample], mask: FeatureMask) -> Result<Self, PipelineError> {
        let xs = samples
            .iter()
            .map(|s| Ok(s.window.masked(mask)?.matrix))
            .collect::<Result<_, FeatureError>>()?;
        Ok(Self {
            xs,
            ys: samples.iter().map(|s| s.label.label).collect(),
        })
    }

    pub fn examples(&self) -> Vec<Example<'_>> {
        self.xs.iter().zip(&self.ys).map(|(x, &y)| Example { x, y }).collect()
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }
}

/// SHA-256 over the evaluated events in order: firm, announcement date, label.
pub fn split_digest(samples: &[Sample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update(format!("{}|{}|{}\n", s.label.firm_id, s.label.event.announcement_date, s.label.label.name()));
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub params: ModelParams,
    pub log: TrainLog,
    pub loss: LossSpec,
    pub warnings: Vec<String>,
}

/// Trains `cfg.model` on the training split, logging validation metrics.
pub fn fit(
    prepared: &PreparedSplits,
    cfg: &ExperimentConfig,
    mask: FeatureMask,
    exec: Execution,
    hook: &mut dyn FnMut(&EpochLog, &ModelParams) -> Result<Control, TrainError>,
) -> Result<FitOutcome, PipelineError> {
    fit_samples(&prepared.train, &prepared.val, cfg, mask, exec, hook)
}

/// [`fit`] on explicit training and validation samples.
pub fn fit_samples(
    train_samples: &[Sample],
    val_samples: &[Sample],
    cfg: &ExperimentConfig,
    mask: FeatureMask,
    exec: Execution,
    hook: &mut dyn FnMut(&EpochLog, &ModelParams) -> Result<Control, TrainError>,
) -> Result<FitOutcome, PipelineError> {
    let train_set = MaskedSplit::from_samples(train_samples, mask)?;
    let val_set = MaskedSplit::from_samples(val_samples, mask)?;
    let dist = distribution(train_set.ys.iter().copied())?;
    let (loss, warnings) = class_weights(&dist, &cfg.weights)?;
    let init = ModelParams::init(&cfg.model_config(mask))?;
    let (params, log) = train(
        init,
        &train_set.examples(),
        &val_set.examples(),
        &loss,
        &cfg.train_config(),
        exec,
        hook,
    )?;
    Ok(FitOutcome {
        params,
        log,
        loss,
        warnings,
    })
}

/// Evaluation report for `params` on one split.
pub fn evaluate(
    params: &ModelParams,
    samples: &[Sample],
    split_name: &str,
    mask: FeatureMask,
    cfg: &ExperimentConfig,
    exec: Execution,
) -> Result<EvaluationReport, PipelineError> {
    let set = MaskedSplit::from_samples(samples, mask)?;
    let xs: Vec<&Tensor> = set.xs.iter().collect();
    let predicted: Vec<Direction> = predict_all(params, &xs, exec)?.into_iter().map(|p| p.predicted_class).collect();
    let meta = ReportMeta {
        model: params.config.kind,
        sentiment: mask.uses_sentiment(),
        seed: cfg.seed,
        tau: cfg.tau,
        split: split_name.to_string(),
        split_digest: split_digest(samples),
    };
    Ok(EvaluationReport::evaluate(meta, &set.ys, &predicted, cfg.cost)?)
}

/// Reports of one experiment: a test report per mask and, when both masks
/// ran, their comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub reports: Vec<EvaluationReport>,
    pub ablation: Option<AblationReport>,
    pub logs: Vec<TrainLog>,
}

/// Prepares the dataset once, then trains and evaluates `cfg.model` on each mask.
pub fn run_experiment(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    masks: &[FeatureMask],
    exec: Execution,
) -> Result<ExperimentOutcome, PipelineError> {
    let prepared = prepare_dataset(dataset, cfg, exec)?;
    run_prepared(&prepared, cfg, masks, exec)
}

pub fn run_prepared(
    prepared: &PreparedSplits,
    cfg: &ExperimentConfig,
    masks: &[FeatureMask],
    exec: Execution,
) -> Result<ExperimentOutcome, PipelineError> {
    let mut reports = Vec::new();
    let mut logs = Vec::new();
    for &mask in masks {
        let out = fit(prepared, cfg, mask, exec, &mut |_, _| Ok(Control::Continue))?;
        reports.push(evaluate(&out.params, &prepared.test, "test", mask, cfg, exec)?);
        logs.push(out.log);
    }
    let ablation = match reports.as_slice() {
        [a, b] if a.meta.sentiment != b.meta.sentiment => {
            let (with, without) = if a.meta.sentiment { (a, b) } else { (b, a) };
            Some(ablation_report(with, without)?)
        }
        _ => None,
    };
    Ok(ExperimentOutcome { reports, ablation, logs })
}
