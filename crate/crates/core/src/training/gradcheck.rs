use serde::{Deserialize, Serialize};

use super::loss::{weighted_ce, LossSpec};
use crate::exec::{self, Execution};
use crate::labeling::Direction;
use crate::models::{forward, AttentionConfig, ForwardCtx, LstmConfig, ModelConfig, ModelKind, ModelParams};
use crate::numerics::{gradient_check, GradCheckConfig, GradCheckReport, Mode, NumericsError, RngStream, Tensor};

/// Checks every parameter gradient of the weighted loss for one window.
/// With `dropout_seed` the pass runs in training mode and every evaluation
/// replays the same dropout masks.
pub fn check_model_gradients(
    params: &ModelParams,
    x: &Tensor,
    class: Direction,
    spec: &LossSpec,
    dropout_seed: Option<u64>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, NumericsError> {
    let probe = |e: &dyn std::fmt::Display| NumericsError::Probe(e.to_string());
    gradient_check(
        |g, vars| {
            let mut rng = dropout_seed.map(|s| RngStream::named(s, "gradcheck-dropout"));
            let mut ctx = ForwardCtx {
                mode: if rng.is_some() { Mode::Train } else { Mode::Eval },
                rng: rng.as_mut(),
                attention_maps: None,
            };
            let logits = forward(g, &params.config, vars, x, &mut ctx).map_err(|e| probe(&e))?;
            weighted_ce(logits, class.index(), spec).map_err(|e| probe(&e))
        },
        &params.tensors,
        cfg,
    )
}

/// Small architecture used by the gradient suite: T = 5, LSTM hidden 8,
/// attention model_dim 8 with 2 heads and feed-forward width 16.
pub fn reduced_config(kind: ModelKind, input_dim: usize, seed: u64) -> ModelConfig {
    let mut c = ModelConfig::new(kind, input_dim, 5);
    c.lstm = LstmConfig {
        hidden: 8,
        ..LstmConfig::default()
    };
    c.attention = AttentionConfig {
        heads: 2,
        model_dim: 8,
        ff_dim: 16,
        ..AttentionConfig::default()
    };
    c.seed = seed;
    c
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub model: ModelKind,
    pub mode: String,
    pub probes: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Gradient checks for all three architectures in eval mode and in training
/// mode with fixed dropout masks. Weights are non-uniform so that every
/// class weight enters the check.
pub fn gradient_suite(
    configs: &[ModelConfig],
    check: &GradCheckConfig,
    exec: Execution,
) -> Result<Vec<SuiteEntry>, NumericsError> {
    let spec = LossSpec {
        weights: [2.0, 1.5, 0.5],
    };
    let jobs: Vec<(usize, Option<u64>)> = (0..configs.len()).flat_map(|i| [(i, None), (i, Some(check.seed))]).collect();
    exec::try_map(exec, &jobs, |&(i, dropout)| {
        let config = &configs[i];
        let params = ModelParams::init(config).map_err(|e| NumericsError::Config(e.to_string()))?;
        let mut rng = RngStream::named(config.seed, "gradcheck-input");
        let x = Tensor::matrix(
            config.seq_len,
            config.input_dim,
            (0..config.seq_len * config.input_dim).map(|_| rng.normal()).collect(),
        )?;
        let class = Direction::ALL[rng.index(3)];
        let report = check_model_gradients(&params, &x, class, &spec, dropout, check)?;
        Ok(SuiteEntry {
            model: config.kind,
            mode: if dropout.is_some() { "train" } else { "eval" }.to_string(),
            probes: report.probes,
            max_rel_error: report.max_rel_error,
            passed: report.passed,
        })
    })
}
