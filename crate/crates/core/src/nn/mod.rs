//! Minimal reverse-mode differentiation over dense rank-3 arrays.
//!
//! Everything the models in this crate need is covered by a fixed set of
//! layers (1D convolution, average pooling, transposed convolution, linear,
//! ReLU, batch norm, softmax cross-entropy), so instead of a general tape this
//! module provides each operation as a pure forward/backward function pair.
//! Forward passes take `&self`-style immutable inputs and return outputs plus
//! whatever cache the backward pass needs; backward passes return gradients by
//! value. Nothing is mutated, which makes frozen-model inference safe to share
//! across threads.
//!
//! Training runs in `f32`, gradient checks in `f64`; all code here is generic
//! over [`Scalar`].

pub mod array;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod ops;
pub mod optim;
pub mod params;

pub use array::{Array3, Mat, Scalar, Tensor};
pub use optim::AdamState;
pub use params::{Gradients, ParamId, ParamStore};
