//! Adam (and plain gradient descent) over a [`ParamStore`].

use super::array::{Scalar, Tensor};
use super::params::{Gradients, ParamStore};
use crate::{Error, Result};

/// Adam optimizer state: per-parameter moment accumulators plus the step
/// counter used for bias correction.
///
/// The learning rate is public and mutable so schedules can adjust it
/// between steps.
#[derive(Clone, Debug)]
pub struct AdamState<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    step: u64,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Scalar> AdamState<F> {
    /// Defaults beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn new(store: &ParamStore<F>, lr: F) -> Self {
        let m: Vec<_> = store.iter().map(|(_, t, _)| Tensor::zeros(t.shape())).collect();
        let v = m.clone();
        AdamState {
            lr,
            beta1: F::from_f64(0.9),
            beta2: F::from_f64(0.999),
            eps: F::from_f64(1e-8),
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Moment accumulators in store order, for checkpointing.
    pub fn moments(&self) -> (&[Tensor<F>], &[Tensor<F>]) {
        (&self.m, &self.v)
    }

    /// Restore accumulators and step counter (checkpoint resume).
    pub fn restore(&mut self, m: Vec<Tensor<F>>, v: Vec<Tensor<F>>, step: u64) -> Result<()> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(Error::Config(format!(
                "adam restore: {} moment tensors for {} parameters",
                m.len(),
                self.m.len()
            )));
        }
        for (new, old) in m.iter().chain(v.iter()).zip(self.m.iter().chain(self.v.iter())) {
            if new.shape() != old.shape() {
                return Err(Error::Config(format!(
                    "adam restore: moment shape {:?} does not match parameter shape {:?}",
                    new.shape(),
                    old.shape()
                )));
            }
        }
        self.m = m;
        self.v = v;
        self.step = step;
        Ok(())
    }

    /// One Adam update with bias correction over all trainable parameters.
    ///
    /// Rejects non-finite gradients, naming the offending parameter.
    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &Gradients<F>) -> Result<()> {
        for id in store.ids() {
            if store.is_trainable(id) && !grads.get(id).all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter {:?}",
                    store.name(id)
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let one = F::one();
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);
        for (i, id) in store.ids().enumerate() {
            if !store.is_trainable(id) {
                continue;
            }
            let g = grads.get(id).data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let theta = store.value_mut(id).data_mut();
            for ((mi, vi), (gi, th)) in m.iter_mut().zip(v.iter_mut()).zip(g.iter().zip(theta.iter_mut())) {
                *mi = self.beta1 * *mi + (one - self.beta1) * *gi;
                *vi = self.beta2 * *vi + (one - self.beta2) * *gi * *gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *th -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Plain gradient-descent update (no momentum), the alternative inversion
/// optimizer.
pub fn sgd_step<F: Scalar>(store: &mut ParamStore<F>, grads: &Gradients<F>, lr: F) -> Result<()> {
    for id in store.ids() {
        if !store.is_trainable(id) {
            continue;
        }
        if !grads.get(id).all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient for parameter {:?}",
                store.name(id)
            )));
        }
        let g = grads.get(id).data().to_vec();
        for (th, gi) in store.value_mut(id).data_mut().iter_mut().zip(g) {
            *th -= lr * gi;
        }
    }
    Ok(())
}
