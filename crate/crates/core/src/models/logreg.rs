//! Multinomial logistic regression on the flattened window.

use super::{uniform_init, Cursor, ModelConfig, ModelError, CLASSES};
use crate::numerics::{Graph, RngStream, Tensor, Var};

pub fn param_shapes(c: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    vec![
        ("logreg.w".into(), vec![CLASSES, c.seq_len * c.input_dim]),
        ("logreg.b".into(), vec![1, CLASSES]),
    ]
}

pub(crate) fn init(c: &ModelConfig, rng: &mut RngStream) -> Vec<Tensor> {
    let fan_in = c.seq_len * c.input_dim;
    param_shapes(c).iter().map(|(_, s)| uniform_init(s, fan_in, rng)).collect()
}

/// `W · flatten(x) + b`, with rows of `x` concatenated oldest first.
pub(crate) fn forward<'g>(g: &'g Graph, c: &ModelConfig, params: &[Var<'g>], x: &Tensor) -> Result<Var<'g>, ModelError> {
    let mut p = Cursor::new(params);
    let (w, b) = (p.take()?, p.take()?);
    let flat = g.constant(x.clone().reshape(vec![1, c.seq_len * c.input_dim])?);
    Ok(flat.matmul_t(w)?.add(b)?)
}
