//! Multi-head attention, masks and sinusoidal positions.

use ddvqa_tensor::Tensor;

use super::ModelError;

/// Additive mask value that zeroes attention mass after max-subtraction.
const MASKED: f64 = -1e30;

/// Borrowed projection weights for one attention sublayer.
pub struct ProjectionSet<'a> {
    pub wq: &'a Tensor,
    pub bq: &'a Tensor,
    pub wk: &'a Tensor,
    pub bk: &'a Tensor,
    pub wv: &'a Tensor,
    pub bv: &'a Tensor,
    pub wo: &'a Tensor,
    pub bo: &'a Tensor,
}

/// Post-softmax attention weights of one sublayer, per head, row-major
/// `q_len x k_len`.
#[derive(Debug, Clone)]
pub struct AttentionWeights {
    pub heads: Vec<Vec<f64>>,
    pub q_len: usize,
    pub k_len: usize,
}

/// Scaled dot-product attention with `n_heads` heads. Returns the
/// pre-residual output (queries' shape) and, when `record` is set, the
/// per-head post-softmax weights.
pub fn attention(
    queries: &Tensor,
    keys_values: &Tensor,
    proj: ProjectionSet<'_>,
    n_heads: usize,
    mask: Option<&Tensor>,
    record: bool,
) -> Result<(Tensor, Option<AttentionWeights>), ModelError> {
    let d = *queries.shape().last().expect("rank 2 input");
    let head_dim = d / n_heads;
    let q = queries.matmul(proj.wq)?.add_bias(proj.bq)?;
    let k = keys_values.matmul(proj.wk)?.add_bias(proj.bk)?;
    let v = keys_values.matmul(proj.wv)?.add_bias(proj.bv)?;

    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut contexts = Vec::with_capacity(n_heads);
    let mut recorded = record.then(|| AttentionWeights {
        heads: Vec::with_capacity(n_heads),
        q_len: queries.shape()[0],
        k_len: keys_values.shape()[0],
    });
    for h in 0..n_heads {
        let (lo, hi) = (h * head_dim, (h + 1) * head_dim);
        let qh = q.slice_cols(lo, hi)?;
        let kh = k.slice_cols(lo, hi)?;
        let vh = v.slice_cols(lo, hi)?;
        let mut scores = qh.matmul(&kh.transpose2d()?)?.scale(scale);
        if let Some(mask) = mask {
            scores = scores.add(mask)?;
        }
        let weights = scores.softmax_last();
        if let Some(rec) = recorded.as_mut() {
            rec.heads.push(weights.data().to_vec());
        }
        contexts.push(weights.matmul(&vh)?);
    }
    let merged = Tensor::concat_cols(&contexts)?;
    let out = merged.matmul(proj.wo)?.add_bias(proj.bo)?;
    Ok((out, recorded))
}

/// Lower-triangular additive mask: position q may attend to keys `<= q`.
pub fn causal_mask(n: usize) -> Tensor {
    let mut data = vec![0.0; n * n];
    for q in 0..n {
        for k in (q + 1)..n {
            data[q * n + k] = MASKED;
        }
    }
    Tensor::from_vec(vec![n, n], data).expect("square mask")
}

/// Additive mask removing padded keys for every query; None when nothing
/// is padded.
pub fn padding_mask(q_len: usize, key_is_pad: &[bool]) -> Option<Tensor> {
    if !key_is_pad.iter().any(|&p| p) {
        return None;
    }
    let k_len = key_is_pad.len();
    let mut data = vec![0.0; q_len * k_len];
    for q in 0..q_len {
        for (k, &pad) in key_is_pad.iter().enumerate() {
            if pad {
                data[q * k_len + k] = MASKED;
            }
        }
    }
    Some(Tensor::from_vec(vec![q_len, k_len], data).expect("mask shape"))
}

/// Standard sincos table, `[len, d]`.
pub fn sinusoidal_positions(len: usize, d: usize) -> Tensor {
    let mut data = Vec::with_capacity(len * d);
    for pos in 0..len {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10_000f64.powf(exponent);
            data.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::from_vec(vec![len, d], data).expect("table shape")
}
