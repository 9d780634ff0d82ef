//! Recovery of completely unobserved joint trajectories in 3D human action
//! sequences.
//!
//! A skeletal action with `J` joints over `N` frames is a `3J x N` matrix `X`.
//! When a subset of joints is never marked up, the measurement `Y = A X` drops
//! their coordinate rows, and recovering `X` from `Y` is an ill-posed linear
//! inverse problem. This crate solves it by training a temporal-convolutional
//! autoencoder prior (optionally from incomplete data, via a masked loss) and
//! projecting `Y` onto the decoder's range through latent-space optimization:
//!
//! ```text
//! z* = argmin_z || Y - A D(z) ||^2,    X_hat = D(z*)
//! ```
//!
//! The crate ships the full surrounding apparatus: the neural substrate
//! ([`nn`]), the data model and sampling operators ([`data`]), the model
//! builders ([`models`]), training loops ([`train`]), the inversion solver and
//! simple baselines ([`invert`]), a dictionary-learning / OMP completion
//! baseline ([`sparse`]), and the evaluation grid ([`eval`]).
//!
//! See the `examples/` directory for runnable entry points covering each
//! capability, and the `mocomplete` binary for the batch pipeline.

pub mod cli;
pub mod data;
pub mod eval;
pub mod invert;
pub mod models;
pub mod nn;
pub mod sparse;
pub mod train;
pub(crate) mod util;

use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps variants onto its stable exit codes: configuration and usage
/// problems exit 1, data/shape problems exit 2, numerical failures exit 3.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix dimensions do not line up. The message names the
    /// offending dimension.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Malformed or inconsistent input data (files, masks, manifests).
    #[error("data error: {0}")]
    Data(String),
    /// Invalid configuration or arguments.
    #[error("config error: {0}")]
    Config(String),
    /// Non-finite values or other numerical breakdown.
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
