//! Stacked LSTM; the top layer's final hidden state feeds a linear head.
//!
//! Gate blocks are laid out `[input, forget, candidate, output]` along the
//! columns of each layer's weights.

use super::{uniform_init, Cursor, ForwardCtx, ModelConfig, ModelError, CLASSES};
use crate::numerics::{stack_rows, Graph, RngStream, Tensor, Var};

pub fn param_shapes(c: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let h = c.lstm.hidden;
    let mut out = Vec::new();
    for l in 0..c.lstm.layers {
        let input = if l == 0 { c.input_dim } else { h };
        out.push((format!("lstm.{l}.w_x"), vec![input, 4 * h]));
        out.push((format!("lstm.{l}.w_h"), vec![h, 4 * h]));
        out.push((format!("lstm.{l}.b"), vec![1, 4 * h]));
    }
    out.push(("head.w".into(), vec![h, CLASSES]));
    out.push(("head.b".into(), vec![1, CLASSES]));
    out
}

pub(crate) fn init(c: &ModelConfig, rng: &mut RngStream) -> Vec<Tensor> {
    let h = c.lstm.hidden;
    let mut out = Vec::new();
    for l in 0..c.lstm.layers {
        let input = if l == 0 { c.input_dim } else { h };
        let fan_in = input + h;
        out.push(uniform_init(&[input, 4 * h], fan_in, rng));
        out.push(uniform_init(&[h, 4 * h], fan_in, rng));
        let mut b = uniform_init(&[1, 4 * h], fan_in, rng);
        b.data_mut()[h..2 * h].fill(c.lstm.forget_bias);
        out.push(b);
    }
    out.push(uniform_init(&[h, CLASSES], h, rng));
    out.push(uniform_init(&[1, CLASSES], h, rng));
    out
}

/// One cell step: returns the new `(h, c)`, both `[1, H]`.
pub fn cell<'g>(zx: Var<'g>, h: Var<'g>, c: Var<'g>, w_h: Var<'g>, hidden: usize) -> Result<(Var<'g>, Var<'g>), ModelError> {
    let z = zx.add(h.matmul(w_h)?)?;
    let i = z.slice_cols(0, hidden)?.sigmoid()?;
    let f = z.slice_cols(hidden, hidden)?.sigmoid()?;
    let g = z.slice_cols(2 * hidden, hidden)?.tanh()?;
    let o = z.slice_cols(3 * hidden, hidden)?.sigmoid()?;
    let c = f.mul(c)?.add(i.mul(g)?)?;
    let h = o.mul(c.tanh()?)?;
    Ok((h, c))
}

pub(crate) fn forward<'g>(
    g: &'g Graph,
    c: &ModelConfig,
    params: &[Var<'g>],
    x: &Tensor,
    ctx: &mut ForwardCtx<'_>,
) -> Result<Var<'g>, ModelError> {
    let hidden = c.lstm.hidden;
    let mut p = Cursor::new(params);
    let mut seq = g.constant(x.clone());
    let mut last = None;
    for l in 0..c.lstm.layers {
        let (w_x, w_h, b) = (p.take()?, p.take()?, p.take()?);
        if l > 0 {
            seq = ctx.dropout(seq, c.lstm.dropout)?;
        }
        // input contributions for all steps at once
        let zx = seq.matmul(w_x)?.add_row(b)?;
        let mut h = g.constant(Tensor::zeros(&[1, hidden]));
        let mut cs = g.constant(Tensor::zeros(&[1, hidden]));
        let mut hs = Vec::with_capacity(c.seq_len);
        for t in 0..c.seq_len {
            (h, cs) = cell(zx.row(t)?, h, cs, w_h, hidden)?;
            hs.push(h);
        }
        last = Some(h);
        if l + 1 < c.lstm.layers {
            seq = stack_rows(&hs)?;
        }
    }
    let (w, b) = (p.take()?, p.take()?);
    let h = last.ok_or_else(|| ModelError::Config("lstm needs at least one layer".into()))?;
    Ok(h.matmul(w)?.add(b)?)
}
