//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Values are row-major, contiguous, and immutable after creation; only the
//! gradient buffer of a tensor is interior-mutable. Every op that involves a
//! gradient-tracked input records its parents and a backward closure. Calling
//! [`Tensor::backward`] on a scalar walks the graph once in reverse
//! topological order, accumulates adjoints, and consumes the op records so
//! the graph is freed afterwards. Gradients on `requires_grad` tensors
//! accumulate across backward calls until [`Tensor::zero_grad`].

use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::kernels;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid shape {shape:?}: {reason}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("cross_entropy: all positions ignored, mean is undefined")]
    AllPositionsIgnored,
    #[error("cross_entropy: target {index} out of range for {vocab} classes")]
    TargetOutOfRange { index: usize, vocab: usize },
    #[error("cannot l2-normalize a zero-norm vector")]
    ZeroNorm,
}

pub type Result<T> = std::result::Result<T, TensorError>;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn fresh_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Context handed to a backward closure.
struct BackCtx<'a> {
    parents: &'a [Tensor],
    out_data: &'a [f64],
    grad: &'a [f64],
}

type BackFn = Box<dyn Fn(&BackCtx<'_>) -> Vec<Option<Vec<f64>>>>;

struct Op {
    parents: Vec<Tensor>,
    backward: BackFn,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    needs_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    op: RefCell<Option<Op>>,
}

/// An n-dimensional f64 value, optionally tracked in the autodiff graph.
#[derive(Clone)]
pub struct Tensor(Rc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn new_inner(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Option<Op>) -> Tensor {
        let needs_grad = requires_grad || op.as_ref().is_some_and(|o| !o.parents.is_empty());
        Tensor(Rc::new(Inner {
            id: fresh_id(),
            shape,
            data,
            requires_grad,
            needs_grad,
            grad: RefCell::new(None),
            op: RefCell::new(op),
        }))
    }

    /// Leaf tensor with no gradient tracking.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        if numel_of(&shape) != data.len() {
            return Err(TensorError::InvalidShape {
                op: "from_vec",
                shape,
                reason: format!("{} data elements", data.len()),
            });
        }
        Ok(Self::new_inner(shape, data, false, None))
    }

    /// Leaf tensor that accumulates gradients.
    pub fn param(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        if numel_of(&shape) != data.len() {
            return Err(TensorError::InvalidShape {
                op: "param",
                shape,
                reason: format!("{} data elements", data.len()),
            });
        }
        Ok(Self::new_inner(shape, data, true, None))
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = numel_of(&shape);
        Self::new_inner(shape, vec![0.0; n], false, None)
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Tensor {
        let n = numel_of(&shape);
        Self::new_inner(shape, vec![value; n], false, None)
    }

    pub fn scalar(value: f64) -> Tensor {
        Self::new_inner(vec![1], vec![value], false, None)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// A gradient-free leaf sharing this tensor's values.
    pub fn detach(&self) -> Tensor {
        Self::new_inner(self.0.shape.clone(), self.0.data.clone(), false, None)
    }

    fn from_op(shape: Vec<usize>, data: Vec<f64>, parents: Vec<Tensor>, backward: BackFn) -> Tensor {
        debug_assert_eq!(numel_of(&shape), data.len());
        if parents.iter().any(|p| p.0.needs_grad) {
            Self::new_inner(shape, data, false, Some(Op { parents, backward }))
        } else {
            Self::new_inner(shape, data, false, None)
        }
    }

    // ── elementwise and broadcast ops ───────────────────────────────

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.0.shape.clone(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|ctx| vec![Some(ctx.grad.to_vec()), Some(ctx.grad.to_vec())]),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        let data = self.data().iter().map(|a| a * factor).collect();
        Tensor::from_op(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Box::new(move |ctx| vec![Some(ctx.grad.iter().map(|g| g * factor).collect())]),
        )
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a * b)
            .collect();
        Ok(Tensor::from_op(
            self.0.shape.clone(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|ctx| {
                let a = ctx.parents[0].data();
                let b = ctx.parents[1].data();
                let da = ctx.grad.iter().zip(b).map(|(g, y)| g * y).collect();
                let db = ctx.grad.iter().zip(a).map(|(g, x)| g * x).collect();
                vec![Some(da), Some(db)]
            }),
        ))
    }

    /// Adds a 1-d bias over the last axis, broadcast across leading axes.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let d = *self.shape().last().unwrap_or(&0);
        if bias.shape() != [d] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        let b = bias.data();
        let data = self
            .data()
            .chunks(d)
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        Ok(Tensor::from_op(
            self.0.shape.clone(),
            data,
            vec![self.clone(), bias.clone()],
            Box::new(move |ctx| {
                let mut db = vec![0.0; d];
                for row in ctx.grad.chunks(d) {
                    for (acc, g) in db.iter_mut().zip(row) {
                        *acc += g;
                    }
                }
                vec![Some(ctx.grad.to_vec()), Some(db)]
            }),
        ))
    }

    pub fn gelu(&self) -> Tensor {
        const C: f64 = 0.7978845608028654; // sqrt(2/pi)
        const A: f64 = 0.044715;
        let data = self
            .data()
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh()))
            .collect();
        Tensor::from_op(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Box::new(|ctx| {
                let x = ctx.parents[0].data();
                let dx = ctx
                    .grad
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| {
                        let u = C * (x + A * x * x * x);
                        let t = u.tanh();
                        let du = C * (1.0 + 3.0 * A * x * x);
                        g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                    })
                    .collect();
                vec![Some(dx)]
            }),
        )
    }

    // ── matrix ops ──────────────────────────────────────────────────

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (a_shape, b_shape) = (self.shape(), other.shape());
        if a_shape.len() != 2 || b_shape.len() != 2 || a_shape[1] != b_shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a_shape.to_vec(),
                rhs: b_shape.to_vec(),
            });
        }
        let (m, k, n) = (a_shape[0], a_shape[1], b_shape[1]);
        let mut data = vec![0.0; m * n];
        kernels::matmul_nn(&mut data, self.data(), other.data(), m, k, n);
        Ok(Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |ctx| {
                let a = ctx.parents[0].data();
                let b = ctx.parents[1].data();
                // dA = dC * B^T, dB = A^T * dC
                let mut da = vec![0.0; m * k];
                kernels::matmul_nt(&mut da, ctx.grad, b, m, n, k);
                let mut db = vec![0.0; k * n];
                kernels::matmul_tn(&mut db, a, ctx.grad, m, k, n);
                vec![Some(da), Some(db)]
            }),
        ))
    }

    pub fn transpose2d(&self) -> Result<Tensor> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(TensorError::InvalidShape {
                op: "transpose2d",
                shape: shape.to_vec(),
                reason: "expected rank 2".into(),
            });
        }
        let (r, c) = (shape[0], shape[1]);
        let src = self.data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        Ok(Tensor::from_op(
            vec![c, r],
            data,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut dx = vec![0.0; r * c];
                for j in 0..c {
                    for i in 0..r {
                        dx[i * c + j] = ctx.grad[j * r + i];
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        if numel_of(&shape) != self.numel() {
            return Err(TensorError::InvalidShape {
                op: "reshape",
                shape,
                reason: format!("source has {} elements", self.numel()),
            });
        }
        Ok(Tensor::from_op(
            shape,
            self.data().to_vec(),
            vec![self.clone()],
            Box::new(|ctx| vec![Some(ctx.grad.to_vec())]),
        ))
    }

    // ── normalization and loss ops ──────────────────────────────────

    /// Softmax over the last axis with max-subtraction stabilization.
    pub fn softmax_last(&self) -> Tensor {
        let d = *self.shape().last().unwrap_or(&1);
        let mut data = Vec::with_capacity(self.numel());
        for row in self.data().chunks(d) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&x| (x - m).exp()).collect();
            let s: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|e| e / s));
        }
        Tensor::from_op(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut dx = vec![0.0; ctx.grad.len()];
                for ((dx_row, y_row), g_row) in dx
                    .chunks_mut(d)
                    .zip(ctx.out_data.chunks(d))
                    .zip(ctx.grad.chunks(d))
                {
                    let dot: f64 = g_row.iter().zip(y_row).map(|(g, y)| g * y).sum();
                    for ((dx_i, &y_i), &g_i) in dx_row.iter_mut().zip(y_row).zip(g_row) {
                        *dx_i = y_i * (g_i - dot);
                    }
                }
                vec![Some(dx)]
            }),
        )
    }

    /// Per-row normalization over the last axis followed by an affine map.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        let d = *self.shape().last().unwrap_or(&0);
        if gain.shape() != [d] || bias.shape() != [d] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape().to_vec(),
                rhs: gain.shape().to_vec(),
            });
        }
        let g = gain.data();
        let b = bias.data();
        let mut data = Vec::with_capacity(self.numel());
        for row in self.data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for (i, &x) in row.iter().enumerate() {
                data.push((x - mean) * inv * g[i] + b[i]);
            }
        }
        Ok(Tensor::from_op(
            self.0.shape.clone(),
            data,
            vec![self.clone(), gain.clone(), bias.clone()],
            Box::new(move |ctx| {
                let x = ctx.parents[0].data();
                let g = ctx.parents[1].data();
                let rows = x.len() / d;
                let mut dx = vec![0.0; x.len()];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for r in 0..rows {
                    let xr = &x[r * d..(r + 1) * d];
                    let gr = &ctx.grad[r * d..(r + 1) * d];
                    let mean = xr.iter().sum::<f64>() / d as f64;
                    let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = xr.iter().map(|v| (v - mean) * inv).collect();
                    let gh: Vec<f64> = gr.iter().zip(g).map(|(gi, wi)| gi * wi).collect();
                    let mean_gh = gh.iter().sum::<f64>() / d as f64;
                    let mean_gh_xhat =
                        gh.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for i in 0..d {
                        dx[r * d + i] = inv * (gh[i] - mean_gh - xhat[i] * mean_gh_xhat);
                        dgain[i] += gr[i] * xhat[i];
                        dbias[i] += gr[i];
                    }
                }
                vec![Some(dx), Some(dgain), Some(dbias)]
            }),
        ))
    }

    /// Mean negative log-softmax over non-ignored rows of `[n, vocab]` logits.
    pub fn cross_entropy(&self, targets: &[usize], ignore_index: Option<usize>) -> Result<Tensor> {
        let shape = self.shape();
        if shape.len() != 2 || shape[0] != targets.len() {
            return Err(TensorError::InvalidShape {
                op: "cross_entropy",
                shape: shape.to_vec(),
                reason: format!("expected [{}, vocab]", targets.len()),
            });
        }
        let (n, vocab) = (shape[0], shape[1]);
        let kept: Vec<usize> = (0..n)
            .filter(|&r| Some(targets[r]) != ignore_index)
            .collect();
        if kept.is_empty() {
            return Err(TensorError::AllPositionsIgnored);
        }
        for &r in &kept {
            if targets[r] >= vocab {
                return Err(TensorError::TargetOutOfRange {
                    index: targets[r],
                    vocab,
                });
            }
        }
        let logits = self.data();
        let mut total = 0.0;
        for &r in &kept {
            let row = &logits[r * vocab..(r + 1) * vocab];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            total += lse - row[targets[r]];
        }
        let n_kept = kept.len() as f64;
        let targets = targets.to_vec();
        Ok(Tensor::from_op(
            vec![1],
            vec![total / n_kept],
            vec![self.clone()],
            Box::new(move |ctx| {
                let logits = ctx.parents[0].data();
                let g = ctx.grad[0] / n_kept;
                let mut dx = vec![0.0; logits.len()];
                for &r in &kept {
                    let row = &logits[r * vocab..(r + 1) * vocab];
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|&x| (x - m).exp()).collect();
                    let s: f64 = exps.iter().sum();
                    for i in 0..vocab {
                        let p = exps[i] / s;
                        dx[r * vocab + i] = g * (p - if i == targets[r] { 1.0 } else { 0.0 });
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    // ── gather / scatter style ops ──────────────────────────────────

    /// Embedding lookup: `self` is a `[vocab, d]` table, output `[ids.len(), d]`.
    pub fn lookup(&self, ids: &[usize]) -> Result<Tensor> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(TensorError::InvalidShape {
                op: "lookup",
                shape: shape.to_vec(),
                reason: "expected [vocab, d] table".into(),
            });
        }
        let (vocab, d) = (shape[0], shape[1]);
        for &id in ids {
            if id >= vocab {
                return Err(TensorError::TargetOutOfRange { index: id, vocab });
            }
        }
        let table = self.data();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            data.extend_from_slice(&table[id * d..(id + 1) * d]);
        }
        let ids = ids.to_vec();
        let n = ids.len();
        Ok(Tensor::from_op(
            vec![n, d],
            data,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut dt = vec![0.0; vocab * d];
                for (r, &id) in ids.iter().enumerate() {
                    for i in 0..d {
                        dt[id * d + i] += ctx.grad[r * d + i];
                    }
                }
                vec![Some(dt)]
            }),
        ))
    }

    /// Flat-index gather with scatter-add backward.
    pub fn gather(&self, indices: &[usize], out_shape: Vec<usize>) -> Result<Tensor> {
        if numel_of(&out_shape) != indices.len() {
            return Err(TensorError::InvalidShape {
                op: "gather",
                shape: out_shape,
                reason: format!("{} indices", indices.len()),
            });
        }
        let src = self.data();
        for &i in indices {
            if i >= src.len() {
                return Err(TensorError::TargetOutOfRange {
                    index: i,
                    vocab: src.len(),
                });
            }
        }
        let data = indices.iter().map(|&i| src[i]).collect();
        let indices = indices.to_vec();
        let src_len = src.len();
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut dx = vec![0.0; src_len];
                for (g, &i) in ctx.grad.iter().zip(&indices) {
                    dx[i] += g;
                }
                vec![Some(dx)]
            }),
        ))
    }

    /// Concatenation along axis 0; parts must share trailing dimensions.
    pub fn concat0(parts: &[Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty(), "concat0 of zero tensors");
        let trailing = &parts[0].shape()[1.min(parts[0].shape().len())..];
        let mut rows = 0;
        for p in parts {
            if p.shape().is_empty() || &p.shape()[1..] != trailing {
                return Err(TensorError::ShapeMismatch {
                    op: "concat0",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            rows += p.shape()[0];
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(trailing);
        let mut data = Vec::with_capacity(numel_of(&shape));
        for p in parts {
            data.extend_from_slice(p.data());
        }
        let sizes: Vec<usize> = parts.iter().map(|p| p.numel()).collect();
        Ok(Tensor::from_op(
            shape,
            data,
            parts.to_vec(),
            Box::new(move |ctx| {
                let mut out = Vec::with_capacity(sizes.len());
                let mut offset = 0;
                for &sz in &sizes {
                    out.push(Some(ctx.grad[offset..offset + sz].to_vec()));
                    offset += sz;
                }
                out
            }),
        ))
    }

    /// Column-wise concatenation of rank-2 tensors with equal row counts.
    pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty(), "concat_cols of zero tensors");
        let rows = parts[0].shape().first().copied().unwrap_or(0);
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            if p.shape().len() != 2 || p.shape()[0] != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            widths.push(p.shape()[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut col = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let src = p.data();
            for r in 0..rows {
                data[r * total + col..r * total + col + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            col += w;
        }
        Ok(Tensor::from_op(
            vec![rows, total],
            data,
            parts.to_vec(),
            Box::new(move |ctx| {
                let mut out = Vec::with_capacity(widths.len());
                let mut col = 0;
                for &w in &widths {
                    let mut dp = vec![0.0; rows * w];
                    for r in 0..rows {
                        dp[r * w..(r + 1) * w]
                            .copy_from_slice(&ctx.grad[r * total + col..r * total + col + w]);
                    }
                    out.push(Some(dp));
                    col += w;
                }
                out
            }),
        ))
    }

    /// Rows `start..end` along axis 0, materialized.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor> {
        let shape = self.shape();
        let n = shape.first().copied().unwrap_or(0);
        if start > end || end > n {
            return Err(TensorError::InvalidShape {
                op: "slice_rows",
                shape: shape.to_vec(),
                reason: format!("range {start}..{end}"),
            });
        }
        let row = numel_of(&shape[1..]);
        let mut out_shape = vec![end - start];
        out_shape.extend_from_slice(&shape[1..]);
        let data = self.data()[start * row..end * row].to_vec();
        let total = self.numel();
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut dx = vec![0.0; total];
                dx[start * row..end * row].copy_from_slice(ctx.grad);
                vec![Some(dx)]
            }),
        ))
    }

    /// Columns `start..end` of a rank-2 tensor, materialized.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        let shape = self.shape();
        if shape.len() != 2 || start > end || end > shape[1] {
            return Err(TensorError::InvalidShape {
                op: "slice_cols",
                shape: shape.to_vec(),
                reason: format!("range {start}..{end}"),
            });
        }
        let (rows, cols) = (shape[0], shape[1]);
        let w = end - start;
        let src = self.data();
        let mut data = Vec::with_capacity(rows * w);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + end]);
        }
        Ok(Tensor::from_op(
            vec![rows, w],
            data,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    dx[r * cols + start..r * cols + end]
                        .copy_from_slice(&ctx.grad[r * w..(r + 1) * w]);
                }
                vec![Some(dx)]
            }),
        ))
    }

    // ── reductions and vector ops ───────────────────────────────────

    pub fn sum_all(&self) -> Tensor {
        let total: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(
            vec![1],
            vec![total],
            vec![self.clone()],
            Box::new(move |ctx| vec![Some(vec![ctx.grad[0]; n])]),
        )
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.numel();
        let total: f64 = self.data().iter().sum();
        Tensor::from_op(
            vec![1],
            vec![total / n as f64],
            vec![self.clone()],
            Box::new(move |ctx| vec![Some(vec![ctx.grad[0] / n as f64; n])]),
        )
    }

    /// Dot product of two equal-length rank-1 tensors.
    pub fn dot(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape().len() != 1 || self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "dot",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let v: f64 = self.data().iter().zip(other.data()).map(|(a, b)| a * b).sum();
        Ok(Tensor::from_op(
            vec![1],
            vec![v],
            vec![self.clone(), other.clone()],
            Box::new(|ctx| {
                let g = ctx.grad[0];
                let a = ctx.parents[0].data();
                let b = ctx.parents[1].data();
                vec![
                    Some(b.iter().map(|y| g * y).collect()),
                    Some(a.iter().map(|x| g * x).collect()),
                ]
            }),
        ))
    }

    /// Scales a rank-1 tensor to unit L2 norm; errors on a zero vector.
    pub fn l2_normalize(&self) -> Result<Tensor> {
        if self.shape().len() != 1 {
            return Err(TensorError::InvalidShape {
                op: "l2_normalize",
                shape: self.shape().to_vec(),
                reason: "expected rank 1".into(),
            });
        }
        let norm = self.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(TensorError::ZeroNorm);
        }
        let data = self.data().iter().map(|x| x / norm).collect();
        Ok(Tensor::from_op(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Box::new(move |ctx| {
                let y = ctx.out_data;
                let ydotg: f64 = y.iter().zip(ctx.grad).map(|(a, b)| a * b).sum();
                let dx = ctx
                    .grad
                    .iter()
                    .zip(y)
                    .map(|(g, yi)| (g - yi * ydotg) / norm)
                    .collect();
                vec![Some(dx)]
            }),
        ))
    }

    // ── backward pass ───────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar loss. Consumes the recorded graph;
    /// gradients accumulate on `requires_grad` tensors until `zero_grad`.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape().to_vec()));
        }
        // Iterative post-order DFS; each node enters the order exactly once.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.0.id) {
                continue;
            }
            stack.push((node.clone(), true));
            if let Some(op) = node.0.op.borrow().as_ref() {
                for p in &op.parents {
                    if p.0.needs_grad && !visited.contains(&p.0.id) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }

        let mut adjoint: std::collections::HashMap<u64, Vec<f64>> =
            std::collections::HashMap::new();
        adjoint.insert(self.0.id, vec![1.0]);

        for node in order.iter().rev() {
            let Some(grad) = adjoint.remove(&node.0.id) else {
                continue;
            };
            if node.0.requires_grad {
                let mut slot = node.0.grad.borrow_mut();
                match slot.as_mut() {
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grad) {
                            *a += g;
                        }
                    }
                    None => *slot = Some(grad.clone()),
                }
            }
            let op = node.0.op.borrow_mut().take();
            if let Some(op) = op {
                let ctx = BackCtx {
                    parents: &op.parents,
                    out_data: &node.0.data,
                    grad: &grad,
                };
                let contribs = (op.backward)(&ctx);
                debug_assert_eq!(contribs.len(), op.parents.len());
                for (parent, contrib) in op.parents.iter().zip(contribs) {
                    let Some(contrib) = contrib else { continue };
                    if !parent.0.needs_grad {
                        continue;
                    }
                    match adjoint.entry(parent.0.id) {
                        std::collections::hash_map::Entry::Occupied(mut e) => {
                            for (a, g) in e.get_mut().iter_mut().zip(&contrib) {
                                *a += g;
                            }
                        }
                        std::collections::hash_map::Entry::Vacant(e) => {
                            e.insert(contrib);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
