//! The three classifiers behind one interface.
//!
//! Parameters live in a [`ModelParams`]: an ordered list of named tensors
//! whose names and shapes follow from the [`ModelConfig`] alone. A forward
//! pass binds them to graph leaves and returns `[1, 3]` logits.

pub mod attention;
mod checkpoint;
pub mod logreg;
pub mod lstm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::Direction;
use crate::numerics::{Graph, Mode, NumericsError, RngStream, Tensor, Var};

pub use checkpoint::{config_hash, load_params, read_checkpoint, save_params, write_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_MAGIC};

pub const CLASSES: usize = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[serde(alias = "logistic")]
    LogReg,
    Lstm,
    Attention,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::LogReg, ModelKind::Lstm, ModelKind::Attention];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LogReg => "logreg",
            ModelKind::Lstm => "lstm",
            ModelKind::Attention => "attention",
        }
    }

    /// Row label used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::LogReg => "LogReg",
            ModelKind::Lstm => "LSTM",
            ModelKind::Attention => "Attention",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logreg" | "logistic" => Ok(ModelKind::LogReg),
            "lstm" => Ok(ModelKind::Lstm),
            "attention" | "transformer" => Ok(ModelKind::Attention),
            _ => Err(ModelError::Config(format!("unknown model kind {s:?}"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Applied to the hidden sequence between stacked layers.
    pub dropout: f64,
    pub forget_bias: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 64,
            dropout: 0.5,
            forget_bias: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    /// Applied to attention weights and to the feed-forward output.
    pub dropout: f64,
    pub positional_encoding: bool,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 4,
            model_dim: 64,
            ff_dim: 256,
            dropout: 0.5,
            positional_encoding: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub seq_len: usize,
    #[serde(default)]
    pub lstm: LstmConfig,
    #[serde(default)]
    pub attention: AttentionConfig,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_classes() -> usize {
    CLASSES
}

impl ModelConfig {
    pub fn new(kind: ModelKind, input_dim: usize, seq_len: usize) -> Self {
        Self {
            kind,
            input_dim,
            seq_len,
            lstm: LstmConfig::default(),
            attention: AttentionConfig::default(),
            classes: CLASSES,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.input_dim == 0 || self.seq_len == 0 {
            return bad("input_dim and seq_len must be positive".into());
        }
        if self.classes != CLASSES {
            return bad(format!("exactly {CLASSES} classes are supported, got {}", self.classes));
        }
        match self.kind {
            ModelKind::LogReg => {}
            ModelKind::Lstm => {
                let c = &self.lstm;
                if c.layers == 0 || c.hidden == 0 {
                    return bad("lstm layers and hidden must be positive".into());
                }
                if !(0.0..1.0).contains(&c.dropout) {
                    return bad(format!("lstm dropout must lie in [0, 1), got {}", c.dropout));
                }
            }
            ModelKind::Attention => {
                let c = &self.attention;
                if c.layers == 0 || c.heads == 0 || c.model_dim == 0 || c.ff_dim == 0 {
                    return bad("attention sizes must be positive".into());
                }
                if !c.model_dim.is_multiple_of(c.heads) {
                    return bad(format!("model_dim {} is not divisible by heads {}", c.model_dim, c.heads));
                }
                if !(0.0..1.0).contains(&c.dropout) {
                    return bad(format!("attention dropout must lie in [0, 1), got {}", c.dropout));
                }
            }
        }
        Ok(())
    }

    /// Names and shapes of every trainable tensor, in binding order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        match self.kind {
            ModelKind::LogReg => logreg::param_shapes(self),
            ModelKind::Lstm => lstm::param_shapes(self),
            ModelKind::Attention => attention::param_shapes(self),
        }
    }

    /// Closed-form trainable parameter count.
    ///
    /// * logreg: `3·T·d + 3`
    /// * lstm: `Σ_l 4H·(in_l + H + 1) + 3H + 3`, with `in_0 = d` and `in_l = H` above
    /// * attention: `D·(d + 1) + L·(4D² + 2DF + 9D + F) + 3D + 3`
    pub fn param_count(&self) -> usize {
        let (t, d) = (self.seq_len, self.input_dim);
        match self.kind {
            ModelKind::LogReg => 3 * t * d + 3,
            ModelKind::Lstm => {
                let h = self.lstm.hidden;
                (0..self.lstm.layers)
                    .map(|l| 4 * h * (if l == 0 { d } else { h } + h + 1))
                    .sum::<usize>()
                    + 3 * h
                    + 3
            }
            ModelKind::Attention => {
                let (m, f, l) = (self.attention.model_dim, self.attention.ff_dim, self.attention.layers);
                m * (d + 1) + l * (4 * m * m + 2 * m * f + 9 * m + f) + 3 * m + 3
            }
        }
    }
}

/// Trainable tensors together with the config that shaped them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

/// Uniform draw in ±√(1/fan_in).
pub(crate) fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut RngStream) -> Tensor {
    let limit = (1.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_range(-limit, limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape from config")
}

impl ModelParams {
    /// Fresh parameters drawn from the `init` substream of `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = RngStream::named(config.seed, "init");
        let tensors = match config.kind {
            ModelKind::LogReg => logreg::init(config, &mut rng),
            ModelKind::Lstm => lstm::init(config, &mut rng),
            ModelKind::Attention => attention::init(config, &mut rng),
        };
        let names = config.param_shapes().into_iter().map(|(n, _)| n).collect();
        Ok(Self {
            config: config.clone(),
            names,
            tensors,
        })
    }

    /// Zero-valued parameters with the right shapes.
    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (names, tensors) = config
            .param_shapes()
            .into_iter()
            .map(|(n, s)| (n, Tensor::zeros(&s)))
            .unzip();
        Ok(Self {
            config: config.clone(),
            names,
            tensors,
        })
    }

    /// Checks names and shapes against the config.
    pub fn check_layout(&self) -> Result<(), ModelError> {
        self.config.validate()?;
        let expected = self.config.param_shapes();
        if expected.len() != self.tensors.len() || expected.len() != self.names.len() {
            return Err(ModelError::Dimension(format!(
                "config expects {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), (n, t)) in expected.iter().zip(self.names.iter().zip(&self.tensors)) {
            if name != n || shape.as_slice() != t.shape() {
                return Err(ModelError::Dimension(format!(
                    "expected {name} {shape:?}, found {n} {:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Euclidean norm over all parameters.
    pub fn norm(&self) -> f64 {
        self.tensors.iter().map(|t| t.data().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Binds every tensor as a trainable graph leaf.
    pub fn bind<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        self.tensors.iter().map(|t| g.param(t.clone())).collect()
    }
}

/// Per-call options for a forward pass.
pub struct ForwardCtx<'a> {
    pub mode: Mode,
    pub rng: Option<&'a mut RngStream>,
    /// Receives each attention-weight matrix (layer-major, then head).
    pub attention_maps: Option<&'a mut Vec<Tensor>>,
}

impl ForwardCtx<'_> {
    pub fn eval() -> ForwardCtx<'static> {
        ForwardCtx {
            mode: Mode::Eval,
            rng: None,
            attention_maps: None,
        }
    }

    pub(crate) fn dropout<'g>(&mut self, x: Var<'g>, rate: f64) -> Result<Var<'g>, ModelError> {
        if self.mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let rng = self
            .rng
            .as_deref_mut()
            .ok_or_else(|| ModelError::Config("train-mode forward pass needs a dropout stream".into()))?;
        Ok(x.dropout(rate, Mode::Train, rng)?)
    }
}

/// Sequential access to bound parameters in layout order.
pub(crate) struct Cursor<'a, 'g> {
    vars: &'a [Var<'g>],
    next: usize,
}

impl<'a, 'g> Cursor<'a, 'g> {
    pub(crate) fn new(vars: &'a [Var<'g>]) -> Self {
        Self { vars, next: 0 }
    }

    pub(crate) fn take(&mut self) -> Result<Var<'g>, ModelError> {
        let v = self
            .vars
            .get(self.next)
            .copied()
            .ok_or_else(|| ModelError::Dimension("too few parameters bound".into()))?;
        self.next += 1;
        Ok(v)
    }
}

/// Logits `[1, 3]` for one window.
pub fn forward<'g>(
    g: &'g Graph,
    config: &ModelConfig,
    params: &[Var<'g>],
    x: &Tensor,
    ctx: &mut ForwardCtx<'_>,
) -> Result<Var<'g>, ModelError> {
    if x.shape() != [config.seq_len, config.input_dim] {
        return Err(ModelError::Dimension(format!(
            "window shape {:?}, model expects [{}, {}]",
            x.shape(),
            config.seq_len,
            config.input_dim
        )));
    }
    let expected = config.param_shapes().len();
    if params.len() != expected {
        return Err(ModelError::Dimension(format!("expected {expected} parameter tensors, got {}", params.len())));
    }
    match config.kind {
        ModelKind::LogReg => logreg::forward(g, config, params, x),
        ModelKind::Lstm => lstm::forward(g, config, params, x, ctx),
        ModelKind::Attention => attention::forward(g, config, params, x, ctx),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class_probs: [f64; 3],
    pub predicted_class: Direction,
}

impl Prediction {
    /// Argmax with ties going to the lowest class index.
    pub fn from_probs(class_probs: [f64; 3]) -> Self {
        let mut best = 0;
        for k in 1..3 {
            if class_probs[k] > class_probs[best] {
                best = k;
            }
        }
        Self {
            class_probs,
            predicted_class: Direction::from_index(best).expect("three classes"),
        }
    }
}

impl ModelParams {
    /// Eval-mode prediction for one window.
    pub fn predict(&self, x: &Tensor) -> Result<Prediction, ModelError> {
        let g = Graph::new();
        let vars: Vec<Var<'_>> = self.tensors.iter().map(|t| g.constant(t.clone())).collect();
        let logits = forward(&g, &self.config, &vars, x, &mut ForwardCtx::eval())?;
        let probs = logits.softmax(1)?.value();
        let p = probs.data();
        Ok(Prediction::from_probs([p[0], p[1], p[2]]))
    }

    /// Attention-weight matrices from an eval-mode pass (attention models only).
    pub fn attention_maps(&self, x: &Tensor) -> Result<Vec<Tensor>, ModelError> {
        if self.config.kind != ModelKind::Attention {
            return Err(ModelError::Config("attention maps exist only for the attention model".into()));
        }
        let g = Graph::new();
        let vars: Vec<Var<'_>> = self.tensors.iter().map(|t| g.constant(t.clone())).collect();
        let mut maps = Vec::new();
        let mut ctx = ForwardCtx {
            mode: Mode::Eval,
            rng: None,
            attention_maps: Some(&mut maps),
        };
        forward(&g, &self.config, &vars, x, &mut ctx)?;
        Ok(maps)
    }
}
