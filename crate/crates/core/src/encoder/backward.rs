use ndarray::{s, Array1, Array2, Array3, Axis};

use super::forward::{ForwardOutput, LnCache};
use super::{gelu_grad, EncoderConfig, EncoderError, EncoderParams};

/// Gradients of the scalar loss with respect to the forward outputs.
#[derive(Debug, Clone)]
pub struct Upstream {
    pub d_start: Array2<f64>,
    pub d_end: Array2<f64>,
    /// Gradient with respect to the tapped hidden states, if the loss uses them.
    pub d_tapped: Option<Array3<f64>>,
}

impl Upstream {
    pub fn zeros(n: usize, t: usize) -> Self {
        Self { d_start: Array2::zeros((n, t)), d_end: Array2::zeros((n, t)), d_tapped: None }
    }
}

fn ln_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gain: &Array1<f64>,
    d_gain: &mut Array1<f64>,
    d_bias: &mut Array1<f64>,
) -> Array2<f64> {
    *d_gain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *d_bias += &dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, g), xh), &is) in
        dx.rows_mut().into_iter().zip(dxhat.rows()).zip(cache.xhat.rows()).zip(&cache.inv_std)
    {
        let sum_g = g.sum();
        let sum_gx = g.dot(&xh);
        for ((o, &gi), &xi) in out.iter_mut().zip(g).zip(xh) {
            *o = is / d * (d * gi - sum_g - xi * sum_gx);
        }
    }
    dx
}

/// `y = x·w + b`: accumulates `dw`, `db` and returns `dx`.
fn linear_backward(
    x: &Array2<f64>,
    w: &Array2<f64>,
    dy: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    ndarray::linalg::general_mat_mul(1.0, &x.t(), dy, 1.0, dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

/// Accumulates parameter gradients of one forward pass into `grads`.
pub fn backward_into(
    params: &EncoderParams,
    cfg: &EncoderConfig,
    out: &ForwardOutput,
    up: &Upstream,
    grads: &mut EncoderParams,
) -> Result<(), EncoderError> {
    let (n, t) = out.start_logits.dim();
    if up.d_start.dim() != (n, t) || up.d_end.dim() != (n, t) {
        return Err(EncoderError::ShapeMismatch("upstream logit gradients".into()));
    }
    if let Some(dt) = &up.d_tapped {
        if dt.dim() != out.tapped.dim() {
            return Err(EncoderError::ShapeMismatch("upstream tapped gradient".into()));
        }
    }
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    for (i, cache) in out.caches.iter().enumerate() {
        let mut d_logits = Array2::zeros((t, 2));
        d_logits.column_mut(0).assign(&up.d_start.row(i));
        d_logits.column_mut(1).assign(&up.d_end.row(i));
        let mut dx = linear_backward(&cache.final_hidden, &params.qa_w, &d_logits, &mut grads.qa_w, &mut grads.qa_b);

        for li in (0..cfg.n_layers).rev() {
            if li + 1 == cfg.tap_layer {
                if let Some(dt) = &up.d_tapped {
                    dx += &dt.index_axis(Axis(0), i);
                }
            }
            let lp = &params.layers[li];
            let lg = &mut grads.layers[li];
            let lc = &cache.layers[li];

            let dz2 = ln_backward(&dx, &lc.ln2, &lp.ln2_gain, &mut lg.ln2_gain, &mut lg.ln2_bias);
            let d_act = linear_backward(&lc.ff_act, &lp.w2, &dz2, &mut lg.w2, &mut lg.b2);
            let d_pre = d_act * &lc.ff_pre.mapv(gelu_grad);
            let mut dh1 = linear_backward(&lc.h1, &lp.w1, &d_pre, &mut lg.w1, &mut lg.b1);
            dh1 += &dz2;

            let dz1 = ln_backward(&dh1, &lc.ln1, &lp.ln1_gain, &mut lg.ln1_gain, &mut lg.ln1_bias);
            let d_ctx = linear_backward(&lc.ctx, &lp.wo, &dz1, &mut lg.wo, &mut lg.bo);

            let mut dq = Array2::zeros((t, cfg.d_model));
            let mut dk = Array2::zeros((t, cfg.d_model));
            let mut dv = Array2::zeros((t, cfg.d_model));
            for h in 0..cfg.n_heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let p = &lc.probs[h];
                let dc = d_ctx.slice(cols);
                let dp = dc.dot(&lc.v.slice(cols).t());
                dv.slice_mut(cols).assign(&p.t().dot(&dc));
                let mut ds = &dp * p;
                for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                    let total = row.sum();
                    row.zip_mut_with(&prow, |v, &pv| *v -= pv * total);
                }
                ds *= scale;
                dq.slice_mut(cols).assign(&ds.dot(&lc.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&lc.q.slice(cols)));
            }
            let mut dx_in = dz1;
            dx_in += &linear_backward(&lc.x_in, &lp.wq, &dq, &mut lg.wq, &mut lg.bq);
            dx_in += &linear_backward(&lc.x_in, &lp.wk, &dk, &mut lg.wk, &mut lg.bk);
            dx_in += &linear_backward(&lc.x_in, &lp.wv, &dv, &mut lg.wv, &mut lg.bv);
            dx = dx_in;
        }

        for (p, row) in dx.rows().into_iter().enumerate() {
            let mut tok = grads.token_emb.row_mut(cache.ids[p] as usize);
            tok += &row;
            let mut pos = grads.position_emb.row_mut(p);
            pos += &row;
            let mut seg = grads.segment_emb.row_mut(cache.segments[p] as usize);
            seg += &row;
        }
    }
    Ok(())
}

/// Exact reverse-mode gradients of every parameter.
pub fn backward(
    params: &EncoderParams,
    cfg: &EncoderConfig,
    out: &ForwardOutput,
    up: &Upstream,
) -> Result<EncoderParams, EncoderError> {
    let mut grads = EncoderParams::zeros(cfg);
    backward_into(params, cfg, out, up, &mut grads)?;
    Ok(grads)
}
