//! Span-prediction task loss, multilingual contrastive loss, and their
//! weighted sum.
//!
//! Every cross-entropy subtracts the row maximum before exponentiating.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("label {label} out of range for row {row} (t = {t})")]
    LabelOutOfRange { row: usize, label: usize, t: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Cross-entropy of `logits` against `target` over the positions where
/// `active` is true. Returns the loss and `softmax - onehot` (zero at
/// inactive positions).
fn cross_entropy(logits: ArrayView1<f64>, target: usize, active: impl Fn(usize) -> bool) -> (f64, Array1<f64>) {
    let max = logits.iter().enumerate().filter(|(j, _)| active(*j)).map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max);
    let mut probs = Array1::zeros(logits.len());
    let mut sum = 0.0;
    for (j, &v) in logits.iter().enumerate() {
        if active(j) {
            probs[j] = (v - max).exp();
            sum += probs[j];
        }
    }
    let loss = sum.ln() - (logits[target] - max);
    probs /= sum;
    probs[target] -= 1.0;
    (loss, probs)
}

/// Loss value and gradients with respect to the start and end logits.
///
/// Mean over rows of `(CE(start) + CE(end)) / 2`. When a mask is given,
/// positions with mask 0 are excluded from each softmax.
pub fn task_loss_grad(
    start_logits: &Array2<f64>,
    end_logits: &Array2<f64>,
    start_labels: &[usize],
    end_labels: &[usize],
    mask: Option<&Array2<f64>>,
) -> Result<(f64, Array2<f64>, Array2<f64>), LossError> {
    let (n, t) = start_logits.dim();
    if end_logits.dim() != (n, t) || start_labels.len() != n || end_labels.len() != n {
        return Err(LossError::ShapeMismatch("logits and labels disagree".into()));
    }
    if let Some(m) = mask {
        if m.dim() != (n, t) {
            return Err(LossError::ShapeMismatch("mask does not match logits".into()));
        }
    }
    if n == 0 {
        return Err(LossError::ShapeMismatch("empty batch".into()));
    }
    let mut d_start = Array2::zeros((n, t));
    let mut d_end = Array2::zeros((n, t));
    let mut total = 0.0;
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        let active = |j: usize| mask.is_none_or(|m| m[[i, j]] != 0.0);
        let mut row_loss = [0.0; 2];
        for (k, (&label, logits, grad)) in
            [(&start_labels[i], start_logits, &mut d_start), (&end_labels[i], end_logits, &mut d_end)]
                .into_iter()
                .enumerate()
        {
            if label >= t || !active(label) {
                return Err(LossError::LabelOutOfRange { row: i, label, t });
            }
            let (l, g) = cross_entropy(logits.row(i), label, active);
            row_loss[k] = l;
            grad.row_mut(i).assign(&(g * scale));
        }
        total += row_loss[0] + row_loss[1];
    }
    Ok((total * scale, d_start, d_end))
}

pub fn task_loss(
    start_logits: &Array2<f64>,
    end_logits: &Array2<f64>,
    start_labels: &[usize],
    end_labels: &[usize],
) -> Result<f64, LossError> {
    task_loss_grad(start_logits, end_logits, start_labels, end_labels, None).map(|r| r.0)
}

/// `Q = O·Pᵀ`.
pub fn logits_matrix(o: &Array2<f64>, p: &Array2<f64>) -> Result<Array2<f64>, LossError> {
    if o.dim() != p.dim() {
        return Err(LossError::ShapeMismatch(format!("O {:?} vs P {:?}", o.dim(), p.dim())));
    }
    if o.nrows() == 0 {
        return Err(LossError::ShapeMismatch("empty batch".into()));
    }
    Ok(o.dot(&p.t()))
}

/// Symmetric cross-entropy over `Q = O·Pᵀ` with diagonal targets, plus its
/// gradients with respect to `O` and `P`.
pub fn contrastive_loss_grad(o: &Array2<f64>, p: &Array2<f64>) -> Result<(f64, Array2<f64>, Array2<f64>), LossError> {
    let q = logits_matrix(o, p)?;
    let n = q.nrows();
    let all = |_| true;
    let mut d_q = Array2::zeros((n, n));
    let (mut row_loss, mut col_loss) = (0.0, 0.0);
    for i in 0..n {
        let (l, g) = cross_entropy(q.row(i), i, all);
        row_loss += l;
        let mut r = d_q.row_mut(i);
        r += &g;
    }
    for j in 0..n {
        let (l, g) = cross_entropy(q.column(j), j, all);
        col_loss += l;
        let mut c = d_q.column_mut(j);
        c += &g;
    }
    let loss = (row_loss / n as f64 + col_loss / n as f64) / 2.0;
    d_q /= 2.0 * n as f64;
    let d_o = d_q.dot(p);
    let d_p = d_q.t().dot(o);
    Ok((loss, d_o, d_p))
}

pub fn contrastive_loss(o: &Array2<f64>, p: &Array2<f64>) -> Result<f64, LossError> {
    contrastive_loss_grad(o, p).map(|r| r.0)
}

/// Spreads a pooled-embedding gradient `[n × d]` back over the masked mean.
pub fn gap_backward(d_pooled: &Array2<f64>, mask: &Array2<f64>) -> ndarray::Array3<f64> {
    let (n, t) = mask.dim();
    let d = d_pooled.ncols();
    let mut out = ndarray::Array3::zeros((n, t, d));
    for i in 0..n {
        let count = mask.row(i).sum();
        if count == 0.0 {
            continue;
        }
        for p in 0..t {
            let w = mask[[i, p]] / count;
            if w != 0.0 {
                out.index_axis_mut(Axis(0), i).row_mut(p).scaled_add(w, &d_pooled.row(i));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_task: f64,
    pub l_contrastive: f64,
    pub w_contrastive: f64,
    pub l_total: f64,
    pub applied: bool,
}

/// `l_total = l_task + w · l_contrastive`, or `l_task` alone when the
/// contrastive term is gated off (it is then recorded as 0).
pub fn total_loss(l_task: f64, l_contrastive: f64, w: f64, apply_contrastive: bool) -> LossBreakdown {
    debug_assert!(w >= 0.0);
    if apply_contrastive {
        LossBreakdown { l_task, l_contrastive, w_contrastive: w, l_total: l_task + w * l_contrastive, applied: true }
    } else {
        LossBreakdown { l_task, l_contrastive: 0.0, w_contrastive: w, l_total: l_task, applied: false }
    }
}
