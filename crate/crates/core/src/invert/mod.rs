//! Reconstruction by projection onto the decoder's range: latent-space
//! optimization of `|| Y - A D(z) ||^2` with frozen decoder weights, plus the
//! feed-forward and nearest-joint baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{fill_missing, ActionSequence, FillStrategy, MaskSpec};
use crate::models::{Autoencoder, FramewiseAutoencoder, FramewiseCache};
use crate::nn::array::{Array3, Mat, Scalar, Tensor};
use crate::nn::optim::sgd_step;
use crate::nn::params::{Gradients, ParamStore};
use crate::nn::AdamState;
use crate::train::batch_sq_loss_grad;
use crate::util::derive_seed;
use crate::{Error, Result};

/// Anything that maps a latent code to a (1, 3J, N) sequence and can push a
/// gradient back to the code. Decoder parameters are read-only here, so
/// inversions can share one decoder across threads.
pub trait LatentDecoder<F: Scalar>: Sync {
    type Cache;
    fn latent_dim(&self) -> usize;
    fn decode_latent(&self, z: &Mat<F>) -> Result<(Array3<F>, Self::Cache)>;
    fn latent_grad(&self, cache: &Self::Cache, dxhat: &Array3<F>) -> Result<Mat<F>>;
}

impl<F: Scalar> LatentDecoder<F> for Autoencoder<F> {
    type Cache = crate::models::DecodeCache<F>;

    fn latent_dim(&self) -> usize {
        self.spec().latent
    }

    fn decode_latent(&self, z: &Mat<F>) -> Result<(Array3<F>, Self::Cache)> {
        self.decode(z)
    }

    fn latent_grad(&self, cache: &Self::Cache, dxhat: &Array3<F>) -> Result<Mat<F>> {
        Ok(self.decode_backward_input(cache, dxhat))
    }
}

/// Frame-wise decoder lifted to sequence level: the latent is the
/// concatenation of per-frame codes (dimension `latent * N`).
pub struct FramewiseSeqDecoder<'a, F> {
    pub model: &'a FramewiseAutoencoder<F>,
    pub frames: usize,
}

impl<F: Scalar> LatentDecoder<F> for FramewiseSeqDecoder<'_, F> {
    type Cache = FramewiseCache<F>;

    fn latent_dim(&self) -> usize {
        self.model.spec().latent * self.frames
    }

    fn decode_latent(&self, z: &Mat<F>) -> Result<(Array3<F>, Self::Cache)> {
        let per_frame = self.model.spec().latent;
        if z.rows() != 1 || z.cols() != per_frame * self.frames {
            return Err(Error::Shape(format!(
                "frame-wise latent is ({}, {}), want (1, {})",
                z.rows(),
                z.cols(),
                per_frame * self.frames
            )));
        }
        let zf = Mat::from_vec(self.frames, per_frame, z.data().to_vec())?;
        let (yf, cache) = self.model.decode_frames(&zf)?;
        Ok((frames_to_array(&yf), cache))
    }

    fn latent_grad(&self, cache: &Self::Cache, dxhat: &Array3<F>) -> Result<Mat<F>> {
        let dyf = array_to_frames(dxhat);
        let dzf = self.model.decode_backward_input(cache, &dyf)?;
        Mat::from_vec(1, dzf.rows() * dzf.cols(), dzf.data().to_vec())
    }
}

/// (N, 3J) frame rows -> (1, 3J, N).
pub fn frames_to_array<F: Scalar>(yf: &Mat<F>) -> Array3<F> {
    let (n, c) = (yf.rows(), yf.cols());
    let mut out = Array3::zeros(1, c, n);
    for fi in 0..n {
        for ci in 0..c {
            *out.at_mut(0, ci, fi) = yf.at(fi, ci);
        }
    }
    out
}

/// (1, 3J, N) -> (N, 3J) frame rows.
pub fn array_to_frames<F: Scalar>(x: &Array3<F>) -> Mat<F> {
    let (c, n) = (x.channels(), x.time());
    let mut out = Mat::zeros(n, c);
    for fi in 0..n {
        for ci in 0..c {
            *out.at_mut(fi, ci) = x.at(0, ci, fi);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvOptimizer {
    Adam,
    /// Plain gradient descent; offered as an option, not the reference
    /// configuration.
    Sgd,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InversionConfig {
    pub iterations: u64,
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: InvOptimizer,
    /// Extra restarts from Gaussian-perturbed starting points (the objective
    /// is non-convex); 0 keeps the single feed-forward start.
    #[serde(default)]
    pub restarts: usize,
    #[serde(default = "default_sigma")]
    pub restart_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_optimizer() -> InvOptimizer {
    InvOptimizer::Adam
}

fn default_sigma() -> f64 {
    0.5
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            iterations: 500,
            learning_rate: 1.0,
            optimizer: InvOptimizer::Adam,
            restarts: 0,
            restart_sigma: 0.5,
            seed: 0,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("inversion needs at least one iteration".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("inversion learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one latent-space optimization.
pub struct InversionResult<F> {
    /// Best-objective latent code.
    pub z_star: Mat<F>,
    /// `D(z_star)`, re-decoded exactly.
    pub x_hat: Array3<F>,
    /// Masked squared residual at every iterate, starting with `z0`.
    pub trace: Vec<f64>,
    pub initial_objective: f64,
    /// `min` over the trace; never exceeds `initial_objective`.
    pub objective: f64,
}

/// Feed-forward baseline: `D(E(Y_filled))`, plus the latent code `z0` used to
/// initialize the optimizer.
pub fn feedforward_reconstruct<F: Scalar>(
    y_filled: &Array3<F>,
    model: &Autoencoder<F>,
) -> Result<(Array3<F>, Mat<F>)> {
    let (z0, _) = model.encode(y_filled)?;
    let (xhat, _) = model.decode(&z0)?;
    Ok((xhat, z0))
}

/// Minimize `|| Y - A D(z) ||^2` over the latent code with the decoder held
/// fixed. Returns the best iterate over the whole trace, `z0` included, so
/// the reported objective never exceeds the objective at `z0`.
pub fn latent_optimize<F: Scalar, D: LatentDecoder<F>>(
    y: &Array3<F>,
    mask: &MaskSpec,
    decoder: &D,
    z0: &Mat<F>,
    cfg: &InversionConfig,
) -> Result<InversionResult<F>> {
    cfg.validate()?;
    if y.batch() != 1 {
        return Err(Error::Shape(format!(
            "inversion runs one sequence at a time, got batch {}",
            y.batch()
        )));
    }
    if z0.rows() != 1 || z0.cols() != decoder.latent_dim() {
        return Err(Error::Shape(format!(
            "z0 is ({}, {}), decoder wants (1, {})",
            z0.rows(),
            z0.cols(),
            decoder.latent_dim()
        )));
    }
    if y.channels() % 3 != 0 || mask.joints() != y.channels() / 3 {
        return Err(Error::Shape(format!(
            "mask has J = {}, observation has {} channels",
            mask.joints(),
            y.channels()
        )));
    }
    let dense = vec![mask.dense(y.time())];

    let mut best: Option<(f64, Mat<F>, Vec<f64>)> = None;
    let mut initial_objective = f64::NAN;
    for r in 0..=cfg.restarts {
        let z_init = if r == 0 {
            z0.clone()
        } else {
            perturb(z0, cfg.restart_sigma, derive_seed(cfg.seed, &format!("restart/{r}")))
        };
        let (run_best, run_z, trace) = optimize_once(y, &dense, decoder, &z_init, cfg)?;
        if r == 0 {
            initial_objective = trace[0];
        }
        if best.as_ref().map_or(true, |(b, _, _)| run_best < *b) {
            best = Some((run_best, run_z, trace));
        }
    }
    let (objective, z_star, trace) = best.expect("at least the base run");
    let (x_hat, _) = decoder.decode_latent(&z_star)?;
    Ok(InversionResult { z_star, x_hat, trace, initial_objective, objective })
}

fn optimize_once<F: Scalar, D: LatentDecoder<F>>(
    y: &Array3<F>,
    dense: &[Vec<bool>],
    decoder: &D,
    z_init: &Mat<F>,
    cfg: &InversionConfig,
) -> Result<(f64, Mat<F>, Vec<f64>)> {
    let latent = z_init.cols();
    let mut zstore = ParamStore::new();
    let z_id = zstore.add("z", Tensor::from_vec(&[latent], z_init.data().to_vec())?, true)?;
    let mut adam = AdamState::new(&zstore, F::from_f64(cfg.learning_rate));

    let mut trace = Vec::with_capacity(cfg.iterations as usize + 1);
    let mut best_obj = f64::INFINITY;
    let mut best_z = z_init.clone();
    for it in 0..=cfg.iterations {
        let z = Mat::from_vec(1, latent, zstore.value(z_id).data().to_vec())?;
        let (xhat, cache) = decoder.decode_latent(&z)?;
        let (obj, dxhat) = batch_sq_loss_grad(&xhat, y, Some(dense))?;
        let obj = obj.into_f64();
        if !obj.is_finite() {
            return Err(Error::Numeric(format!(
                "inversion objective became non-finite at iteration {it}; objective trace: {trace:?}"
            )));
        }
        trace.push(obj);
        if obj < best_obj {
            best_obj = obj;
            best_z = z;
        }
        if it == cfg.iterations {
            break;
        }
        let dz = decoder.latent_grad(&cache, &dxhat)?;
        let mut grads = Gradients::zeros_like(&zstore);
        grads.accumulate(z_id, &Tensor::from_vec(&[latent], dz.data().to_vec())?);
        match cfg.optimizer {
            InvOptimizer::Adam => adam.step(&mut zstore, &grads)?,
            InvOptimizer::Sgd => sgd_step(&mut zstore, &grads, F::from_f64(cfg.learning_rate))?,
        }
    }
    Ok((best_obj, best_z, trace))
}

/// Gaussian perturbation of the starting code (Box-Muller, seeded).
fn perturb<F: Scalar>(z0: &Mat<F>, sigma: f64, seed: u64) -> Mat<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = z0
        .data()
        .iter()
        .map(|v| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let g = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            *v + F::from_f64(sigma * g)
        })
        .collect();
    Mat::from_vec(z0.rows(), z0.cols(), data).expect("same shape")
}

/// Per frame, copy each unobserved joint from the Euclidean-nearest observed
/// joint (ties to the lower index). Needs no trained model.
pub fn nearest_joint_baseline(y: &ActionSequence, mask: &MaskSpec) -> Result<ActionSequence> {
    fill_missing(y, mask, FillStrategy::NearestJoint, None)
}
