use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::labeling::{ClassDistribution, Direction};
use crate::numerics::Var;

/// Probabilities are clamped to this before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Class weights `w_k` of the weighted cross-entropy, indexed UP, DOWN, NEUTRAL.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub weights: [f64; 3],
}

impl Default for LossSpec {
    fn default() -> Self {
        Self { weights: [1.0; 3] }
    }
}

impl LossSpec {
    /// True when both directional weights are at least the NEUTRAL weight.
    pub fn favours_directional(&self) -> bool {
        let w = self.weights;
        w[0] >= w[2] && w[1] >= w[2]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum WeightMode {
    /// `w_k = N / (3 · N_k)`.
    #[default]
    InverseFrequency,
    Manual {
        weights: [f64; 3],
        /// Accept weights that give NEUTRAL more weight than a directional class.
        #[serde(default)]
        allow_override: bool,
    },
}


/// Derives loss weights. Returns warnings for accepted-but-unusual weights.
pub fn class_weights(dist: &ClassDistribution, mode: &WeightMode) -> Result<(LossSpec, Vec<String>), TrainError> {
    let mut warnings = Vec::new();
    let spec = match mode {
        WeightMode::InverseFrequency => {
            if let Some(k) = dist.counts.iter().position(|&c| c == 0) {
                return Err(TrainError::Weights(format!(
                    "class {} has no training examples; inverse-frequency weights are undefined, set manual weights instead",
                    Direction::ALL[k]
                )));
            }
            let n = dist.total() as f64;
            let spec = LossSpec {
                weights: dist.counts.map(|c| n / (3.0 * c as f64)),
            };
            if !spec.favours_directional() {
                warnings.push(format!(
                    "inverse-frequency weights {:?} give NEUTRAL more weight than a directional class",
                    spec.weights
                ));
            }
            spec
        }
        WeightMode::Manual { weights, allow_override } => {
            if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(TrainError::Weights(format!("weights must be positive and finite, got {weights:?}")));
            }
            let spec = LossSpec { weights: *weights };
            if !spec.favours_directional() {
                if !allow_override {
                    return Err(TrainError::Weights(format!(
                        "weights {weights:?} violate w_up, w_down >= w_neutral; set allow_override to use them anyway"
                    )));
                }
                warnings.push(format!("using weights {weights:?} that favour NEUTRAL by explicit override"));
            }
            spec
        }
    };
    Ok((spec, warnings))
}

/// `-w_y · ln(max(softmax(logits)_y, 1e-12))` as a graph node.
pub fn weighted_ce<'g>(logits: Var<'g>, class: usize, spec: &LossSpec) -> Result<Var<'g>, TrainError> {
    let w = *spec.weights.get(class).ok_or(TrainError::Domain(class))?;
    Ok(logits.softmax(1)?.pick(class)?.clamp_min(PROB_FLOOR)?.log()?.scale(-w)?)
}

/// The same loss evaluated on a probability vector.
pub fn weighted_ce_value(probs: &[f64; 3], class: usize, spec: &LossSpec) -> Result<f64, TrainError> {
    let w = *spec.weights.get(class).ok_or(TrainError::Domain(class))?;
    Ok(-w * probs[class].max(PROB_FLOOR).ln())
}
