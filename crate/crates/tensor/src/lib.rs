//! Minimal dense-tensor library with reverse-mode autodiff.
//!
//! Everything is 64-bit and row-major. The op set is exactly what a small
//! multimodal transformer needs: matmul, elementwise arithmetic, gelu,
//! softmax, layer norm, cross entropy, embedding lookup, gather, slicing and
//! concatenation, plus the vector ops used by contrastive losses. Matmul
//! inner loops run on the rayon pool when the `parallel` feature (default)
//! is enabled; results are bit-identical to the sequential fallback.

pub mod checkpoint;
pub mod kernels;
mod tensor;

pub use tensor::{Result, Tensor, TensorError};

/// A named trainable tensor. Names are dotted paths and double as
/// checkpoint keys, so they must be unique within a model.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        Parameter {
            name: name.into(),
            tensor,
        }
    }
}
