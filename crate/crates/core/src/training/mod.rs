//! Weighted cross-entropy, class weights, optimizers and the training loop.

mod adam;
mod gradcheck;
mod lbfgs;
mod loss;
mod trainer;

use thiserror::Error;

use crate::labeling::LabelError;
use crate::models::ModelError;
use crate::numerics::NumericsError;

pub use gradcheck::{check_model_gradients, gradient_suite, reduced_config, SuiteEntry};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsOutcome};
pub use loss::{class_weights, weighted_ce, weighted_ce_value, LossSpec, WeightMode, PROB_FLOOR};
pub use trainer::{
    batch_gradients, epoch_permutation, predict_all, train, Control, EpochLog, Example, Optimizer, TrainConfig, TrainLog,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid class weights: {0}")]
    Weights(String),
    #[error("class {0} is not a valid label")]
    Domain(usize),
    #[error("non-finite {what} at epoch {epoch}, batch {batch} (samples {samples:?}); parameter norm {param_norm:e}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        batch: usize,
        samples: Vec<usize>,
        param_norm: f64,
    },
    #[error("non-finite gradient for parameter tensor {0}")]
    NonFiniteGradient(usize),
    #[error("{0}")]
    Hook(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Label(#[from] LabelError),
}
