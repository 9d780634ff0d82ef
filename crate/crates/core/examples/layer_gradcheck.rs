//! Finite-difference verification of every layer's backward pass, in f64.
//!
//! The same checks run (with more trials) in the test suite; this example
//! shows how to use the `gradcheck` utilities against your own compositions.
//!
//! ```bash
//! cargo run --release --example layer_gradcheck
//! ```

use mocomplete::nn::array::{Array3, Mat, Tensor};
use mocomplete::nn::gradcheck::{finite_difference_grad, max_rel_error};
use mocomplete::nn::ops;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (b, cin, cout, t, k) = (2, 3, 4, 10, 4);

    // conv1d weight gradient vs central differences
    let x = Array3::from_vec(b, cin, t, rand_vec(&mut rng, b * cin * t))?;
    let w0 = rand_vec(&mut rng, cout * cin * k);
    let bias = Tensor::from_vec(&[cout], rand_vec(&mut rng, cout))?;
    let upstream = rand_vec(&mut rng, b * cout * t);

    let f = |wv: &[f64]| -> f64 {
        let w = Tensor::from_vec(&[cout, cin, k], wv.to_vec()).unwrap();
        let y = ops::conv1d(&x, &w, &bias).unwrap();
        y.data().iter().zip(&upstream).map(|(v, u)| v * u).sum()
    };
    let w = Tensor::from_vec(&[cout, cin, k], w0.clone())?;
    let dy = Array3::from_vec(b, cout, t, upstream.clone())?;
    let (_, dw, _) = ops::conv1d_backward(&x, &w, &dy)?;
    let fd = finite_difference_grad(f, &w0, 1e-5);
    println!("conv1d dW        max rel err {:.2e}", max_rel_error(dw.data(), &fd));

    // transposed conv input gradient
    let xt = Array3::from_vec(b, cin, t, rand_vec(&mut rng, b * cin * t))?;
    let wt = Tensor::from_vec(&[cout, cin, k], rand_vec(&mut rng, cout * cin * k))?;
    let bt = Tensor::from_vec(&[cout], rand_vec(&mut rng, cout))?;
    let up2 = rand_vec(&mut rng, b * cout * 2 * t);
    let ft = |xv: &[f64]| -> f64 {
        let xa = Array3::from_vec(b, cin, t, xv.to_vec()).unwrap();
        let y = ops::conv_transpose1d(&xa, &wt, &bt).unwrap();
        y.data().iter().zip(&up2).map(|(v, u)| v * u).sum()
    };
    let dyt = Array3::from_vec(b, cout, 2 * t, up2.clone())?;
    let (dxt, _, _) = ops::conv_transpose1d_backward(&xt, &wt, &dyt)?;
    let fdt = finite_difference_grad(ft, xt.data(), 1e-5);
    println!("conv_transpose dX max rel err {:.2e}", max_rel_error(dxt.data(), &fdt));

    // softmax cross-entropy: gradient equals softmax - onehot
    let logits0 = rand_vec(&mut rng, 3 * 5);
    let labels = vec![0usize, 3, 2];
    let fl = |lv: &[f64]| -> f64 {
        let logits = Mat::from_vec(3, 5, lv.to_vec()).unwrap();
        ops::softmax_cross_entropy(&logits, &labels).unwrap().0
    };
    let logits = Mat::from_vec(3, 5, logits0.clone())?;
    let (_, probs) = ops::softmax_cross_entropy(&logits, &labels)?;
    let grad = ops::softmax_cross_entropy_backward(&probs, &labels);
    let fdl = finite_difference_grad(fl, &logits0, 1e-5);
    println!("cross-entropy    max rel err {:.2e}", max_rel_error(grad.data(), &fdl));

    // the adjoint identity that makes the decoder the exact transpose of a
    // strided convolution
    let xa = Array3::from_vec(1, 2, 6, rand_vec(&mut rng, 12))?;
    let wa = Tensor::from_vec(&[3, 2, 4], rand_vec(&mut rng, 24))?;
    let ya = Array3::from_vec(1, 3, 12, rand_vec(&mut rng, 36))?;
    let zero_b = Tensor::zeros(&[3]);
    let lhs: f64 = ops::conv_transpose1d(&xa, &wa, &zero_b)?
        .data()
        .iter()
        .zip(ya.data())
        .map(|(p, q)| p * q)
        .sum();
    // adjoint applied by hand: correlate y with the kernel at even offsets
    let mut rhs = 0.0;
    for i in 0..2 {
        for tt in 0..6 {
            let mut acc = 0.0;
            for o in 0..3 {
                for j in 0..4 {
                    let idx = 2 * tt as isize + 2 - j as isize;
                    if idx >= 0 && idx < 12 {
                        acc += wa.data()[(o * 2 + i) * 4 + j] * ya.at(0, o, idx as usize);
                    }
                }
            }
            rhs += acc * xa.at(0, i, tt);
        }
    }
    println!("adjoint identity rel err {:.2e}", (lhs - rhs).abs() / lhs.abs().max(1e-12));
    Ok(())
}
