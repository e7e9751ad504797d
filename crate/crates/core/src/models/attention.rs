//! Post-norm Transformer encoder with mean pooling over time.

use super::{uniform_init, Cursor, ForwardCtx, ModelConfig, ModelError, CLASSES};
use crate::numerics::{concat_cols, Graph, RngStream, Tensor, Var};

pub fn param_shapes(c: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (m, f) = (c.attention.model_dim, c.attention.ff_dim);
    let mut out = vec![("input.w".into(), vec![c.input_dim, m]), ("input.b".into(), vec![1, m])];
    for l in 0..c.attention.layers {
        for name in ["q", "k", "v", "o"] {
            out.push((format!("enc.{l}.w_{name}"), vec![m, m]));
            out.push((format!("enc.{l}.b_{name}"), vec![1, m]));
        }
        out.push((format!("enc.{l}.ln1.gamma"), vec![1, m]));
        out.push((format!("enc.{l}.ln1.beta"), vec![1, m]));
        out.push((format!("enc.{l}.ff1.w"), vec![m, f]));
        out.push((format!("enc.{l}.ff1.b"), vec![1, f]));
        out.push((format!("enc.{l}.ff2.w"), vec![f, m]));
        out.push((format!("enc.{l}.ff2.b"), vec![1, m]));
        out.push((format!("enc.{l}.ln2.gamma"), vec![1, m]));
        out.push((format!("enc.{l}.ln2.beta"), vec![1, m]));
    }
    out.push(("head.w".into(), vec![m, CLASSES]));
    out.push(("head.b".into(), vec![1, CLASSES]));
    out
}

pub(crate) fn init(c: &ModelConfig, rng: &mut RngStream) -> Vec<Tensor> {
    param_shapes(c)
        .into_iter()
        .map(|(name, shape)| {
            if name.ends_with(".gamma") {
                Tensor::filled(&shape, 1.0)
            } else if name.ends_with(".beta") {
                Tensor::zeros(&shape)
            } else {
                let fan_in = match name.as_str() {
                    "input.w" | "input.b" => c.input_dim,
                    n if n.contains(".ff2.") => c.attention.ff_dim,
                    _ => c.attention.model_dim,
                };
                uniform_init(&shape, fan_in, rng)
            }
        })
        .collect()
}

/// `PE[pos, 2i] = sin(pos / 10000^(2i/D))`, `PE[pos, 2i+1] = cos(...)`.
pub fn positional_encoding(len: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; len * dim];
    for pos in 0..len {
        for j in 0..dim {
            let pair = (j / 2) * 2;
            let angle = pos as f64 / 10000f64.powf(pair as f64 / dim as f64);
            data[pos * dim + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![len, dim], data).expect("positive sizes")
}

fn affine<'g>(x: Var<'g>, p: &mut Cursor<'_, 'g>) -> Result<Var<'g>, ModelError> {
    let (w, b) = (p.take()?, p.take()?);
    Ok(x.matmul(w)?.add_row(b)?)
}

fn norm<'g>(x: Var<'g>, p: &mut Cursor<'_, 'g>) -> Result<Var<'g>, ModelError> {
    let (gamma, beta) = (p.take()?, p.take()?);
    Ok(x.layer_norm()?.mul_row(gamma)?.add_row(beta)?)
}

pub(crate) fn forward<'g>(
    g: &'g Graph,
    c: &ModelConfig,
    params: &[Var<'g>],
    x: &Tensor,
    ctx: &mut ForwardCtx<'_>,
) -> Result<Var<'g>, ModelError> {
    let a = &c.attention;
    let dk = a.model_dim / a.heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut p = Cursor::new(params);
    let mut h = affine(g.constant(x.clone()), &mut p)?;
    if a.positional_encoding {
        h = h.add(g.constant(positional_encoding(c.seq_len, a.model_dim)))?;
    }
    for _ in 0..a.layers {
        let q = affine(h, &mut p)?;
        let k = affine(h, &mut p)?;
        let v = affine(h, &mut p)?;
        let mut heads = Vec::with_capacity(a.heads);
        for i in 0..a.heads {
            let (qi, ki, vi) = (q.slice_cols(i * dk, dk)?, k.slice_cols(i * dk, dk)?, v.slice_cols(i * dk, dk)?);
            let weights = qi.matmul_t(ki)?.scale(scale)?.softmax(1)?;
            if let Some(maps) = ctx.attention_maps.as_deref_mut() {
                maps.push(weights.value().as_ref().clone());
            }
            let weights = ctx.dropout(weights, a.dropout)?;
            heads.push(weights.matmul(vi)?);
        }
        let attn = affine(concat_cols(&heads)?, &mut p)?;
        h = norm(h.add(attn)?, &mut p)?;
        let ff = affine(affine(h, &mut p)?.relu()?, &mut p)?;
        let ff = ctx.dropout(ff, a.dropout)?;
        h = norm(h.add(ff)?, &mut p)?;
    }
    affine(h.mean_rows()?, &mut p)
}
