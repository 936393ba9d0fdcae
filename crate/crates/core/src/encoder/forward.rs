use std::borrow::Borrow;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use super::{gelu, EncoderConfig, EncoderError, EncoderParams};
use crate::features::Feature;

/// Normalized activations and inverse standard deviations of one layer norm.
#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub x_in: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Attention probabilities, one `[t × t]` matrix per head.
    pub probs: Vec<Array2<f64>>,
    pub ctx: Array2<f64>,
    pub ln1: LnCache,
    pub h1: Array2<f64>,
    pub ff_pre: Array2<f64>,
    pub ff_act: Array2<f64>,
    pub ln2: LnCache,
}

/// Activations of one batch row, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct RowCache {
    pub(crate) ids: Vec<u32>,
    pub(crate) segments: Vec<u8>,
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) final_hidden: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub start_logits: Array2<f64>,
    pub end_logits: Array2<f64>,
    /// Hidden states after block `tap_layer`, `[n × t × d]`.
    pub tapped: Array3<f64>,
    /// Attention mask as 0/1 floats, `[n × t]`.
    pub mask: Array2<f64>,
    pub caches: Vec<RowCache>,
}

pub(crate) fn linear(x: &ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += b;
    y
}

pub(crate) fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>, eps: f64) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *is = 1.0 / (var + eps).sqrt();
        row *= *is;
    }
    let mut y = &xhat * gain;
    y += bias;
    (y, LnCache { xhat, inv_std })
}

/// Row softmax over `scores` ignoring columns whose mask is zero. A row with
/// no active column yields all zeros.
fn masked_softmax(scores: &mut Array2<f64>, mask: &ArrayView1<f64>) {
    for mut row in scores.rows_mut() {
        let mut max = f64::NEG_INFINITY;
        for (v, &m) in row.iter_mut().zip(mask) {
            if m == 0.0 {
                *v = f64::NEG_INFINITY;
            } else if *v > max {
                max = *v;
            }
        }
        if max == f64::NEG_INFINITY {
            row.fill(0.0);
            continue;
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row /= sum;
    }
}

fn forward_row(
    params: &EncoderParams,
    cfg: &EncoderConfig,
    feature: &Feature,
    mask: ArrayView1<f64>,
) -> (Array1<f64>, Array1<f64>, Array2<f64>, RowCache) {
    let t = feature.len();
    let d = cfg.d_model;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let mut x = Array2::zeros((t, d));
    for (p, mut row) in x.rows_mut().into_iter().enumerate() {
        row.assign(&params.token_emb.row(feature.ids[p] as usize));
        row += &params.position_emb.row(p);
        row += &params.segment_emb.row(feature.segment_ids[p] as usize);
    }

    let mut layers = Vec::with_capacity(cfg.n_layers);
    let mut tapped = None;
    for (li, lp) in params.layers.iter().enumerate() {
        let q = linear(&x.view(), &lp.wq, &lp.bq);
        let k = linear(&x.view(), &lp.wk, &lp.bk);
        let v = linear(&x.view(), &lp.wv, &lp.bv);
        let mut ctx = Array2::zeros((t, d));
        let mut probs = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t());
            scores *= scale;
            masked_softmax(&mut scores, &mask);
            ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let attn = linear(&ctx.view(), &lp.wo, &lp.bo);
        let (h1, ln1) = layer_norm(&(&x + &attn), &lp.ln1_gain, &lp.ln1_bias, cfg.layer_norm_eps);
        let ff_pre = linear(&h1.view(), &lp.w1, &lp.b1);
        let ff_act = ff_pre.mapv(gelu);
        let ff_out = linear(&ff_act.view(), &lp.w2, &lp.b2);
        let (out, ln2) = layer_norm(&(&h1 + &ff_out), &lp.ln2_gain, &lp.ln2_bias, cfg.layer_norm_eps);
        let x_in = std::mem::replace(&mut x, out);
        layers.push(LayerCache { x_in, q, k, v, probs, ctx, ln1, h1, ff_pre, ff_act, ln2 });
        if li + 1 == cfg.tap_layer {
            tapped = Some(x.clone());
        }
    }

    let logits = linear(&x.view(), &params.qa_w, &params.qa_b);
    let cache = RowCache { ids: feature.ids.clone(), segments: feature.segment_ids.clone(), layers, final_hidden: x };
    (logits.column(0).to_owned(), logits.column(1).to_owned(), tapped.expect("tap_layer validated"), cache)
}

fn check_batch<F: Borrow<Feature>>(cfg: &EncoderConfig, batch: &[F]) -> Result<usize, EncoderError> {
    let Some(first) = batch.first() else {
        return Err(EncoderError::ShapeMismatch("empty batch".into()));
    };
    let t = first.borrow().len();
    if t > cfg.max_positions {
        return Err(EncoderError::ShapeMismatch(format!(
            "sequence length {t} exceeds max_positions {}",
            cfg.max_positions
        )));
    }
    for (i, f) in batch.iter().enumerate() {
        let f = f.borrow();
        if f.len() != t || f.attention_mask.len() != t || f.segment_ids.len() != t {
            return Err(EncoderError::ShapeMismatch(format!("row {i} length differs from row 0 ({t})")));
        }
        if let Some(&id) = f.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(EncoderError::ShapeMismatch(format!(
                "row {i} token id {id} outside vocabulary of {}",
                cfg.vocab_size
            )));
        }
        if f.segment_ids.iter().any(|&s| s > 1) {
            return Err(EncoderError::ShapeMismatch(format!("row {i} has a segment id above 1")));
        }
    }
    Ok(t)
}

pub fn forward<F: Borrow<Feature>>(
    params: &EncoderParams,
    cfg: &EncoderConfig,
    batch: &[F],
) -> Result<ForwardOutput, EncoderError> {
    cfg.validate()?;
    let t = check_batch(cfg, batch)?;
    let n = batch.len();
    let mut mask = Array2::zeros((n, t));
    for (i, f) in batch.iter().enumerate() {
        for (p, &m) in f.borrow().attention_mask.iter().enumerate() {
            mask[[i, p]] = f64::from(m.min(1));
        }
    }
    let mut start_logits = Array2::zeros((n, t));
    let mut end_logits = Array2::zeros((n, t));
    let mut tapped = Array3::zeros((n, t, cfg.d_model));
    let mut caches = Vec::with_capacity(n);
    for (i, f) in batch.iter().enumerate() {
        let (s, e, tap, cache) = forward_row(params, cfg, f.borrow(), mask.row(i));
        start_logits.row_mut(i).assign(&s);
        end_logits.row_mut(i).assign(&e);
        tapped.index_axis_mut(Axis(0), i).assign(&tap);
        caches.push(cache);
    }
    Ok(ForwardOutput { start_logits, end_logits, tapped, mask, caches })
}

/// Masked mean over positions: `[n × t × d]` → `[n × d]`.
pub fn gap(tapped: &Array3<f64>, mask: &Array2<f64>) -> Result<Array2<f64>, EncoderError> {
    let (n, t, d) = tapped.dim();
    if mask.dim() != (n, t) {
        return Err(EncoderError::ShapeMismatch(format!(
            "mask {:?} does not match embeddings [{n}, {t}, {d}]",
            mask.dim()
        )));
    }
    let mut pooled = Array2::zeros((n, d));
    for i in 0..n {
        let count = mask.row(i).sum();
        if count == 0.0 {
            return Err(EncoderError::EmptyMaskRow(i));
        }
        let mut acc = pooled.row_mut(i);
        for p in 0..t {
            if mask[[i, p]] != 0.0 {
                acc.scaled_add(mask[[i, p]], &tapped.slice(s![i, p, ..]));
            }
        }
        acc /= count;
    }
    Ok(pooled)
}
