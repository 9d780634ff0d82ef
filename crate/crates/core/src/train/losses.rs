//! Reconstruction losses.
//!
//! The masked loss sums squared error over observed entries only; with a
//! full mask it runs the exact same arithmetic as the full loss, so the two
//! agree bit-for-bit.

use crate::data::{ActionSequence, MaskSpec};
use crate::nn::array::{Array3, Scalar};
use crate::{Error, Result};

fn check_pair(x: &ActionSequence, xhat: &ActionSequence) -> Result<()> {
    if x.joints() != xhat.joints() || x.frames() != xhat.frames() {
        return Err(Error::Shape(format!(
            "loss: sequences are {}x{} and {}x{}",
            3 * x.joints(),
            x.frames(),
            3 * xhat.joints(),
            xhat.frames()
        )));
    }
    Ok(())
}

fn sq_loss(x: &ActionSequence, xhat: &ActionSequence, mask: Option<&MaskSpec>) -> f64 {
    let mut total = 0.0;
    for n in 0..x.frames() {
        for j in 0..x.joints() {
            if let Some(m) = mask {
                if !m.is_observed(j, n) {
                    continue;
                }
            }
            let a = x.joint(j, n);
            let b = xhat.joint(j, n);
            let dx = a[0] - b[0];
            let dy = a[1] - b[1];
            let dz = a[2] - b[2];
            total += dx * dx + dy * dy + dz * dz;
        }
    }
    total
}

/// Euclidean reconstruction loss: sum over frames and joints of squared 3D
/// distances.
pub fn full_loss(x: &ActionSequence, xhat: &ActionSequence) -> Result<f64> {
    check_pair(x, xhat)?;
    Ok(sq_loss(x, xhat, None))
}

/// Masked loss: squared error between `y` and the sampled reconstruction,
/// summed over observed entries only. `y` is assumed zero-filled off-support
/// (the output of `apply_mask`).
pub fn masked_loss(y: &ActionSequence, xhat: &ActionSequence, mask: &MaskSpec) -> Result<f64> {
    check_pair(y, xhat)?;
    mask.check_sequence(y)?;
    Ok(sq_loss(y, xhat, Some(mask)))
}

/// Batched squared loss and its gradient on rank-3 arrays.
///
/// Per sequence the loss sums over frames/joints; the batch reduces by mean.
/// `masks`, when given, holds one dense (frames x joints) observation bitmap
/// per batch element and restricts both loss and gradient to observed
/// entries.
pub fn batch_sq_loss_grad<F: Scalar>(
    xhat: &Array3<F>,
    target: &Array3<F>,
    masks: Option<&[Vec<bool>]>,
) -> Result<(F, Array3<F>)> {
    if xhat.batch() != target.batch()
        || xhat.channels() != target.channels()
        || xhat.time() != target.time()
    {
        return Err(Error::Shape(format!(
            "batch loss: predictions ({}, {}, {}) vs targets ({}, {}, {})",
            xhat.batch(),
            xhat.channels(),
            xhat.time(),
            target.batch(),
            target.channels(),
            target.time()
        )));
    }
    if let Some(masks) = masks {
        if masks.len() != xhat.batch() {
            return Err(Error::Shape(format!(
                "batch loss: {} masks for batch of {}",
                masks.len(),
                xhat.batch()
            )));
        }
    }
    let (nb, c, t) = (xhat.batch(), xhat.channels(), xhat.time());
    let joints = c / 3;
    let inv_b = F::from_f64(nb as f64).recip();
    let two = F::from_f64(2.0);
    let mut grad = Array3::zeros(nb, c, t);
    let mut loss = F::zero();
    for b in 0..nb {
        for ci in 0..c {
            let j = ci / 3;
            let base = (b * c + ci) * t;
            for n in 0..t {
                if let Some(masks) = masks {
                    if !masks[b][n * joints + j] {
                        continue;
                    }
                }
                let d = xhat.data()[base + n] - target.data()[base + n];
                loss += d * d;
                grad.data_mut()[base + n] = two * d * inv_b;
            }
        }
    }
    Ok((loss * inv_b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::apply_mask;

    fn seq_from(vals: &[[f64; 3]], frames: usize) -> ActionSequence {
        // vals indexed [joint * frames + frame]
        let joints = vals.len() / frames;
        let mut s = ActionSequence::new(joints, frames);
        for j in 0..joints {
            for n in 0..frames {
                s.set_joint(j, n, vals[j * frames + n]);
            }
        }
        s
    }

    #[test]
    fn full_loss_fixtures() {
        let x = seq_from(&[[0.0, 0.0, 0.0]], 1);
        assert_eq!(full_loss(&x, &x).unwrap(), 0.0);

        let xhat = seq_from(&[[0.1, 0.0, 0.0]], 1);
        assert!((full_loss(&x, &xhat).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn full_loss_scales_quadratically() {
        let x = seq_from(&[[0.2, -0.1, 0.4], [0.0, 0.3, 0.1]], 1);
        let zero = seq_from(&[[0.0; 3], [0.0; 3]], 1);
        let base = full_loss(&x, &zero).unwrap();
        let scaled = seq_from(&[[0.6, -0.3, 1.2], [0.0, 0.9, 0.3]], 1);
        let l = full_loss(&scaled, &zero).unwrap();
        assert!((l - 9.0 * base).abs() < 1e-12, "3x residuals give 9x loss");
    }

    #[test]
    fn masked_loss_full_mask_is_bitwise_full_loss() {
        let mut x = ActionSequence::new(3, 5);
        let mut xhat = ActionSequence::new(3, 5);
        for n in 0..5 {
            for j in 0..3 {
                x.set_joint(j, n, [0.1 * n as f64, 0.2 * j as f64, 0.3]);
                xhat.set_joint(j, n, [0.11 * n as f64, 0.19 * j as f64, 0.31]);
            }
        }
        let full = MaskSpec::PerSequence { joints: 3, observed: vec![0, 1, 2] };
        let a = masked_loss(&x, &xhat, &full).unwrap();
        let b = full_loss(&x, &xhat).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn masked_loss_is_blind_off_support() {
        let mut x = ActionSequence::new(2, 3);
        for n in 0..3 {
            x.set_joint(0, n, [1.0, 2.0, 3.0]);
            x.set_joint(1, n, [4.0, 5.0, 6.0]);
        }
        let mask = MaskSpec::PerSequence { joints: 2, observed: vec![0] };
        let y = apply_mask(&x, &mask).unwrap();
        // xhat agrees on observed joint 0, arbitrary on joint 1
        let mut xhat = x.clone();
        for n in 0..3 {
            xhat.set_joint(1, n, [99.0, -99.0, 7.0]);
        }
        assert_eq!(masked_loss(&y, &xhat, &mask).unwrap(), 0.0);
    }

    #[test]
    fn perframe_disjoint_halves_decompose() {
        // 2 frames, 2 joints; frame 0 observes joint 0, frame 1 observes joint 1
        let mut x = ActionSequence::new(2, 2);
        let mut xhat = ActionSequence::new(2, 2);
        x.set_joint(0, 0, [1.0, 0.0, 0.0]);
        x.set_joint(1, 0, [0.0, 2.0, 0.0]);
        x.set_joint(0, 1, [0.0, 0.0, 3.0]);
        x.set_joint(1, 1, [4.0, 0.0, 0.0]);
        xhat.set_joint(0, 0, [1.5, 0.0, 0.0]); // observed, err 0.25
        xhat.set_joint(1, 0, [9.0, 9.0, 9.0]); // unobserved
        xhat.set_joint(0, 1, [9.0, 9.0, 9.0]); // unobserved
        xhat.set_joint(1, 1, [4.0, 1.0, 0.0]); // observed, err 1.0

        let pf = MaskSpec::PerFrame { joints: 2, frames: vec![vec![0], vec![1]] };
        let y = apply_mask(&x, &pf).unwrap();
        let total = masked_loss(&y, &xhat, &pf).unwrap();

        // hand decomposition: the two observed halves contribute 0.25 and 1.0
        assert!((total - 1.25).abs() < 1e-12);

        let half0 = MaskSpec::PerFrame { joints: 2, frames: vec![vec![0], vec![]] };
        let half1 = MaskSpec::PerFrame { joints: 2, frames: vec![vec![], vec![1]] };
        let l0 = masked_loss(&y, &xhat, &half0).unwrap();
        let l1 = masked_loss(&y, &xhat, &half1).unwrap();
        assert!((total - (l0 + l1)).abs() < 1e-12);
    }

    #[test]
    fn masked_leq_full_for_any_completion() {
        // monotonicity: adding terms can only grow the loss
        let mut x = ActionSequence::new(3, 4);
        let mut xhat = ActionSequence::new(3, 4);
        for n in 0..4 {
            for j in 0..3 {
                x.set_joint(j, n, [n as f64 * 0.1, j as f64 * 0.2, 0.05]);
                xhat.set_joint(j, n, [n as f64 * 0.12, j as f64 * 0.18, 0.02]);
            }
        }
        let mask = MaskSpec::PerSequence { joints: 3, observed: vec![0, 2] };
        let y = apply_mask(&x, &mask).unwrap();
        // any completion of y that agrees on observed entries: use x itself
        assert!(masked_loss(&y, &xhat, &mask).unwrap() <= full_loss(&x, &xhat).unwrap());
    }

    #[test]
    fn batch_loss_gradient_matches_finite_differences() {
        use crate::nn::gradcheck::{finite_difference_grad, max_rel_error};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
        let (nb, c, t) = (2usize, 6usize, 4usize);
        let xh: Vec<f64> = (0..nb * c * t).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tg: Vec<f64> = (0..nb * c * t).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let masks: Vec<Vec<bool>> = (0..nb)
            .map(|_| (0..t * 2).map(|_| rng.gen_bool(0.6)).collect())
            .collect();
        let target = Array3::from_vec(nb, c, t, tg).unwrap();

        let f = |v: &[f64]| -> f64 {
            let xhat = Array3::from_vec(nb, c, t, v.to_vec()).unwrap();
            batch_sq_loss_grad(&xhat, &target, Some(&masks)).unwrap().0
        };
        let xhat = Array3::from_vec(nb, c, t, xh.clone()).unwrap();
        let (_, grad) = batch_sq_loss_grad(&xhat, &target, Some(&masks)).unwrap();
        let fd = finite_difference_grad(f, &xh, 1e-5);
        assert!(max_rel_error(grad.data(), &fd) < 1e-4);
    }
}
