//! Weight initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::array::{Scalar, Tensor};

/// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
///
/// Samples are drawn in f64 and then converted, so a given seed produces the
/// same values (up to rounding) for f32 and f64 models.
pub fn uniform_fanin<F: Scalar>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<F> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| F::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape/product consistent")
}
