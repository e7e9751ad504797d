use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::lbfgs::{lbfgs_minimize, LbfgsConfig};
use super::loss::{weighted_ce, weighted_ce_value, LossSpec};
use super::TrainError;
use crate::evaluation::{confusion, metrics};
use crate::exec::{self, Execution};
use crate::labeling::Direction;
use crate::models::{forward, ForwardCtx, ModelError, ModelKind, ModelParams, Prediction};
use crate::numerics::{Graph, Mode, NumericsError, RngStream, Tensor, Var};

/// One training window and its label.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub x: &'a Tensor,
    pub y: Direction,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    /// Full-batch L-BFGS, logistic regression only.
    Lbfgs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub optimizer: Optimizer,
    pub lbfgs: LbfgsConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.lr,
            batch_size: 8,
            epochs: 15,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.eps,
            seed: 0,
            checkpoint_every: 0,
            optimizer: Optimizer::Adam,
            lbfgs: LbfgsConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.epsilon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean of the mini-batch losses.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_macro_f1: Option<f64>,
    pub steps: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// Returned by the per-epoch hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Deterministic sample order for one epoch.
pub fn epoch_permutation(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::named(seed, "shuffle").substream(&epoch.to_string()).shuffle(&mut order);
    order
}

fn dropout_stream(seed: u64, epoch: usize, batch: usize, sample: usize) -> RngStream {
    RngStream::named(seed, "dropout").substream(&format!("{epoch}/{batch}/{sample}"))
}

fn sample_gradient(
    params: &ModelParams,
    example: &Example<'_>,
    spec: &LossSpec,
    rng: Option<RngStream>,
) -> Result<(f64, Vec<Tensor>), TrainError> {
    let g = Graph::new();
    let vars = params.bind(&g);
    let mut rng = rng;
    let mut ctx = ForwardCtx {
        mode: if rng.is_some() { Mode::Train } else { Mode::Eval },
        rng: rng.as_mut(),
        attention_maps: None,
    };
    let logits = forward(&g, &params.config, &vars, example.x, &mut ctx)?;
    let loss = weighted_ce(logits, example.y.index(), spec)?;
    let value = loss.item();
    let mut grads = g.backward(loss)?;
    Ok((value, vars.iter().map(|v: &Var<'_>| grads.take(*v)).collect()))
}

/// Mean loss and mean gradient over `indices`. Per-sample passes may run in
/// parallel; the reduction is always in the order of `indices`. With
/// `dropout = Some((seed, epoch, batch))` the pass runs in training mode.
pub fn batch_gradients(
    params: &ModelParams,
    examples: &[Example<'_>],
    indices: &[usize],
    spec: &LossSpec,
    dropout: Option<(u64, usize, usize)>,
    exec: Execution,
) -> Result<(f64, Vec<Tensor>), TrainError> {
    if indices.is_empty() {
        return Err(TrainError::Config("empty batch".into()));
    }
    let per_sample = exec::try_map(exec, indices, |&i| {
        let ex = examples.get(i).ok_or_else(|| TrainError::Config(format!("sample index {i} out of range")))?;
        let rng = dropout.map(|(seed, epoch, batch)| dropout_stream(seed, epoch, batch, i));
        sample_gradient(params, ex, spec, rng)
    })?;
    let mut total = 0.0;
    let mut sum: Vec<Tensor> = params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect();
    for (loss, grads) in &per_sample {
        total += loss;
        for (acc, g) in sum.iter_mut().zip(grads) {
            acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
        }
    }
    let n = indices.len() as f64;
    for acc in &mut sum {
        acc.data_mut().iter_mut().for_each(|a| *a /= n);
    }
    Ok((total / n, sum))
}

/// Eval-mode predictions in input order.
pub fn predict_all(params: &ModelParams, xs: &[&Tensor], exec: Execution) -> Result<Vec<Prediction>, ModelError> {
    exec::try_map(exec, xs, |x| params.predict(x))
}

fn validation(
    params: &ModelParams,
    val: &[Example<'_>],
    spec: &LossSpec,
    exec: Execution,
) -> Result<(Option<f64>, Option<f64>), TrainError> {
    if val.is_empty() {
        return Ok((None, None));
    }
    let xs: Vec<&Tensor> = val.iter().map(|e| e.x).collect();
    let preds = predict_all(params, &xs, exec)?;
    let mut loss = 0.0;
    for (p, e) in preds.iter().zip(val) {
        loss += weighted_ce_value(&p.class_probs, e.y.index(), spec)?;
    }
    let truth: Vec<Direction> = val.iter().map(|e| e.y).collect();
    let predicted: Vec<Direction> = preds.iter().map(|p| p.predicted_class).collect();
    let f1 = confusion(&truth, &predicted)
        .and_then(|cm| metrics(&cm))
        .map(|m| m.macro_f1)
        .map_err(|e| TrainError::Config(e.to_string()))?;
    Ok((Some(loss / val.len() as f64), Some(f1)))
}

fn is_non_finite(e: &TrainError) -> bool {
    matches!(
        e,
        TrainError::Numerics(NumericsError::NonFinite { .. })
            | TrainError::Model(ModelError::Numerics(NumericsError::NonFinite { .. }))
            | TrainError::NonFiniteGradient(_)
    )
}

/// Trains `params` on `train`, reporting to `hook` after every epoch.
pub fn train(
    mut params: ModelParams,
    train: &[Example<'_>],
    val: &[Example<'_>],
    spec: &LossSpec,
    cfg: &TrainConfig,
    exec: Execution,
    hook: &mut dyn FnMut(&EpochLog, &ModelParams) -> Result<Control, TrainError>,
) -> Result<(ModelParams, TrainLog), TrainError> {
    cfg.validate()?;
    params.check_layout()?;
    if train.is_empty() {
        return Err(TrainError::Config("no training examples".into()));
    }
    if cfg.optimizer == Optimizer::Lbfgs {
        return train_lbfgs(params, train, val, spec, cfg, exec, hook);
    }
    let adam = cfg.adam();
    let mut state = AdamState::new(&params.tensors);
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let order = epoch_permutation(cfg.seed, epoch, train.len());
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for (batch, ids) in order.chunks(cfg.batch_size).enumerate() {
            let fail = |what: &'static str, params: &ModelParams| TrainError::NonFinite {
                what,
                epoch,
                batch,
                samples: ids.to_vec(),
                param_norm: params.norm(),
            };
            let (loss, grads) = match batch_gradients(&params, train, ids, spec, Some((cfg.seed, epoch, batch)), exec) {
                Err(e) if is_non_finite(&e) => return Err(fail("forward value", &params)),
                other => other?,
            };
            if !loss.is_finite() {
                return Err(fail("loss", &params));
            }
            match adam_step(&mut params.tensors, &grads, &mut state, &adam) {
                Err(TrainError::NonFiniteGradient(_)) => return Err(fail("gradient", &params)),
                other => other?,
            }
            loss_sum += loss;
            steps += 1;
        }
        let (val_loss, val_macro_f1) = validation(&params, val, spec, exec)?;
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / steps as f64,
            val_loss,
            val_macro_f1,
            steps,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        let control = hook(&entry, &params)?;
        log.epochs.push(entry);
        if control == Control::Stop {
            log.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    Ok((params, log))
}

fn flatten(tensors: &[Tensor]) -> Vec<f64> {
    tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
}

fn unflatten(template: &[Tensor], flat: &[f64]) -> Vec<Tensor> {
    let mut offset = 0;
    template
        .iter()
        .map(|t| {
            let mut out = t.clone();
            let n = out.len();
            out.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
            out
        })
        .collect()
}

fn train_lbfgs(
    mut params: ModelParams,
    train: &[Example<'_>],
    val: &[Example<'_>],
    spec: &LossSpec,
    cfg: &TrainConfig,
    exec: Execution,
    hook: &mut dyn FnMut(&EpochLog, &ModelParams) -> Result<Control, TrainError>,
) -> Result<(ModelParams, TrainLog), TrainError> {
    if params.config.kind != ModelKind::LogReg {
        return Err(TrainError::Config("L-BFGS is only offered for logistic regression".into()));
    }
    let started = Instant::now();
    let all: Vec<usize> = (0..train.len()).collect();
    let template = params.tensors.clone();
    let mut probe = params.clone();
    let outcome = lbfgs_minimize(
        |x| {
            probe.tensors = unflatten(&template, x);
            let (loss, grads) = batch_gradients(&probe, train, &all, spec, None, exec)?;
            Ok((loss, flatten(&grads)))
        },
        flatten(&params.tensors),
        &cfg.lbfgs,
    )?;
    params.tensors = unflatten(&template, &outcome.x);
    if !params.is_finite() {
        return Err(TrainError::NonFinite {
            what: "parameter",
            epoch: 1,
            batch: 0,
            samples: all,
            param_norm: params.norm(),
        });
    }
    let (val_loss, val_macro_f1) = validation(&params, val, spec, exec)?;
    let entry = EpochLog {
        epoch: 1,
        train_loss: outcome.value,
        val_loss,
        val_macro_f1,
        steps: outcome.iterations,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    hook(&entry, &params)?;
    Ok((
        params,
        TrainLog {
            epochs: vec![entry],
            stopped_early: false,
        },
    ))
}
