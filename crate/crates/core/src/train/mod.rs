//! Training loops for the autoencoders (full, ambient-masked, denoising) and
//! the evaluation classifier.

mod losses;

pub use losses::{batch_sq_loss_grad, full_loss, masked_loss};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    apply_mask, fill_missing, gen_perframe_mask, gen_random_mask, mean_trajectories,
    ActionSequence, FillStrategy, MaskSpec, MeanTrajectories,
};
use crate::models::{Autoencoder, TcnClassifier};
use crate::nn::ops;
use crate::nn::params::Gradients;
use crate::nn::AdamState;
use crate::util::{atomic_write, derive_seed};
use crate::{Error, Result};

/// Fixed chunk width for data-parallel gradient accumulation. Chunks are
/// reduced in index order, so results do not depend on the worker count.
const GRAD_CHUNK: usize = 4;

/// Which reconstruction loss drives autoencoder training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Complete inputs, full loss against the same inputs.
    Full,
    /// Masked inputs, masked loss against the zero-filled observation; the
    /// model is never penalized off-support.
    Ambient,
    /// Masked inputs, full loss against the clean sequence (needs clean
    /// training data).
    Denoising,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Milestone {
    pub iteration: u64,
    /// Absolute factor on the initial learning rate from this iteration on.
    pub multiplier: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossMode,
    pub iterations: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub milestones: Vec<Milestone>,
    pub seed: u64,
    #[serde(default = "default_fill")]
    pub fill: FillStrategy,
    /// Redraw each sequence's training mask every epoch instead of fixing it.
    #[serde(default)]
    pub redraw_masks_per_epoch: bool,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
}

fn default_fill() -> FillStrategy {
    FillStrategy::MeanTrajectory
}

fn default_log_every() -> u64 {
    50
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("training needs at least one iteration".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        let mut prev = 0u64;
        for (i, m) in self.milestones.iter().enumerate() {
            if i > 0 && m.iteration <= prev {
                return Err(Error::Config("milestones must be sorted ascending".into()));
            }
            if !(0.0 < m.multiplier && m.multiplier <= 1.0) {
                return Err(Error::Config(format!(
                    "milestone multiplier {} outside (0, 1]",
                    m.multiplier
                )));
            }
            prev = m.iteration;
        }
        Ok(())
    }

    /// Piecewise-constant, non-increasing learning rate at iteration `t`.
    pub fn lr_at(&self, t: u64) -> f64 {
        let mut lr = self.learning_rate;
        for m in &self.milestones {
            if t >= m.iteration {
                lr = self.learning_rate * m.multiplier;
            }
        }
        lr
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: u64,
    pub lr: f64,
    pub loss: f64,
}

/// Per-interval loss trace, written as CSV (iteration, lr, loss).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    pub fn push(&mut self, iteration: u64, lr: f64, loss: f64) {
        self.entries.push(LogEntry { iteration, lr, loss });
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.entries.last().map(|e| e.loss)
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("iteration,lr,loss\n");
        for e in &self.entries {
            out.push_str(&format!("{},{:.6e},{:.6e}\n", e.iteration, e.lr, e.loss));
        }
        atomic_write(path, out.as_bytes())
    }
}

/// How training masks are assigned in ambient/denoising modes.
pub enum MaskAssignment<'a> {
    /// No masking (full mode).
    None,
    /// One fixed mask per sequence, for all epochs (the default protocol).
    Fixed(&'a [MaskSpec]),
    /// Independently drawn random masks, redrawable per epoch.
    Redrawn { otp: f64, hip: usize, per_frame: bool },
}

/// Deterministic batch order: a pure function of (seed, iteration), so
/// resumed runs reproduce the original bit-for-bit.
struct BatchPlan {
    n: usize,
    batch: usize,
    seed: u64,
}

impl BatchPlan {
    fn batches_per_epoch(&self) -> u64 {
        self.n.div_ceil(self.batch) as u64
    }

    fn epoch_of(&self, iteration: u64) -> u64 {
        iteration / self.batches_per_epoch()
    }

    fn perm(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &format!("shuffle/{epoch}")));
        order.shuffle(&mut rng);
        order
    }

    fn batch_at(&self, iteration: u64, perm: &[usize]) -> Vec<usize> {
        let slot = (iteration % self.batches_per_epoch()) as usize;
        perm.iter().skip(slot * self.batch).take(self.batch).copied().collect()
    }
}

struct PreparedSample {
    /// Model input, already filled.
    input: ActionSequence,
    /// Loss target: the zero-filled observation (ambient) or the clean
    /// sequence (full/denoising).
    target: ActionSequence,
    /// Dense observation bitmap for the masked loss (ambient only).
    dense_mask: Option<Vec<bool>>,
}

fn prepare_samples(
    data: &[ActionSequence],
    masks: Option<&[MaskSpec]>,
    loss: LossMode,
    fill: FillStrategy,
    stats: Option<&MeanTrajectories>,
) -> Result<Vec<PreparedSample>> {
    data.iter()
        .enumerate()
        .map(|(i, x)| {
            let mask = masks.map(|m| &m[i]);
            match (loss, mask) {
                (LossMode::Full, _) => Ok(PreparedSample {
                    input: x.clone(),
                    target: x.clone(),
                    dense_mask: None,
                }),
                (LossMode::Ambient, Some(mask)) => {
                    let y = apply_mask(x, mask)?;
                    let input = fill_missing(&y, mask, fill, stats)?;
                    let dense = mask.dense(x.frames());
                    Ok(PreparedSample { input, target: y, dense_mask: Some(dense) })
                }
                (LossMode::Denoising, Some(mask)) => {
                    let y = apply_mask(x, mask)?;
                    let input = fill_missing(&y, mask, fill, stats)?;
                    Ok(PreparedSample { input, target: x.clone(), dense_mask: None })
                }
                (LossMode::Ambient, None) => {
                    Err(Error::Config("ambient training requires per-sequence masks".into()))
                }
                (LossMode::Denoising, None) => {
                    Err(Error::Config("denoising training requires per-sequence masks".into()))
                }
            }
        })
        .collect()
}

fn draw_masks(
    data: &[ActionSequence],
    otp: f64,
    hip: usize,
    per_frame: bool,
    seed: u64,
    tag: &str,
) -> Result<Vec<MaskSpec>> {
    data.iter()
        .enumerate()
        .map(|(i, x)| {
            let s = derive_seed(seed, &format!("{tag}/{i}"));
            if per_frame {
                gen_perframe_mask(x.joints(), hip, x.frames(), otp, s)
            } else {
                gen_random_mask(x.joints(), hip, otp, s)
            }
        })
        .collect()
}

/// Outcome of an autoencoder training run.
pub struct AeOutcome {
    pub log: TrainLog,
    /// Mean trajectories actually used for input filling (reused at test
    /// time); `None` in full mode.
    pub stats: Option<MeanTrajectories>,
}

/// Train an autoencoder from a fresh Adam state.
pub fn train_autoencoder(
    model: &mut Autoencoder<f32>,
    data: &[ActionSequence],
    masks: MaskAssignment,
    cfg: &TrainConfig,
) -> Result<AeOutcome> {
    let mut adam = AdamState::new(model.params(), cfg.learning_rate as f32);
    run_ae_training(model, data, masks, cfg, &mut adam, 0)
}

/// Train an autoencoder, continuing from `start_iter` with the given Adam
/// state (checkpoint resume).
pub fn run_ae_training(
    model: &mut Autoencoder<f32>,
    data: &[ActionSequence],
    masks: MaskAssignment,
    cfg: &TrainConfig,
    adam: &mut AdamState<f32>,
    start_iter: u64,
) -> Result<AeOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }

    // resolve epoch-0 masks; fill stats always come from these
    let fixed_masks: Option<Vec<MaskSpec>> = match &masks {
        MaskAssignment::None => {
            if cfg.loss != LossMode::Full {
                return Err(Error::Config(format!("{:?} training requires masks", cfg.loss)));
            }
            None
        }
        MaskAssignment::Fixed(m) => {
            if m.len() != data.len() {
                return Err(Error::Shape(format!(
                    "{} masks for {} training sequences",
                    m.len(),
                    data.len()
                )));
            }
            Some(m.to_vec())
        }
        MaskAssignment::Redrawn { otp, hip, per_frame } => {
            Some(draw_masks(data, *otp, *hip, *per_frame, cfg.seed, "train-mask/epoch0")?)
        }
    };

    let stats = match (&fixed_masks, cfg.loss) {
        (_, LossMode::Full) => None,
        (Some(m), _) => Some(mean_trajectories(data, Some(m))?),
        (None, _) => unreachable!("masked modes validated above"),
    };

    let mut prepared =
        prepare_samples(data, fixed_masks.as_deref(), cfg.loss, cfg.fill, stats.as_ref())?;

    let plan = BatchPlan { n: data.len(), batch: cfg.batch_size, seed: cfg.seed };
    let mut log = TrainLog::default();
    let mut current_epoch = plan.epoch_of(start_iter);
    let mut perm = plan.perm(current_epoch);

    for it in start_iter..cfg.iterations {
        let epoch = plan.epoch_of(it);
        if epoch != current_epoch || it == start_iter {
            if epoch != current_epoch {
                current_epoch = epoch;
                perm = plan.perm(epoch);
            }
            if cfg.redraw_masks_per_epoch && epoch > 0 {
                if let MaskAssignment::Redrawn { otp, hip, per_frame } = &masks {
                    let new_masks = draw_masks(
                        data,
                        *otp,
                        *hip,
                        *per_frame,
                        cfg.seed,
                        &format!("train-mask/epoch{epoch}"),
                    )?;
                    prepared =
                        prepare_samples(data, Some(&new_masks), cfg.loss, cfg.fill, stats.as_ref())?;
                }
            }
        }
        let batch = plan.batch_at(it, &perm);
        adam.lr = cfg.lr_at(it) as f32;

        // fixed-size chunks reduced in order: gradient bits do not depend on
        // the rayon worker count
        let chunks: Vec<Vec<usize>> = batch.chunks(GRAD_CHUNK).map(|c| c.to_vec()).collect();
        let results: Vec<Result<(f32, Gradients<f32>)>> = chunks
            .par_iter()
            .map(|chunk| ae_chunk_grads(model, &prepared, chunk))
            .collect();

        let mut grads = Gradients::zeros_like(model.params());
        let mut loss_sum = 0.0f64;
        for r in results {
            let (l, g) = r?;
            loss_sum += l as f64;
            grads.add_all(&g);
        }
        // chunks carry sum-of-sequence losses and gradients; reduce to the
        // batch mean
        let scale = 1.0 / batch.len() as f64;
        grads.scale(scale as f32);
        let loss = loss_sum * scale;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training loss diverged at iteration {it}")));
        }
        adam.step(model.params_mut(), &grads)?;

        if it % cfg.log_every == 0 || it + 1 == cfg.iterations {
            log.push(it, adam.lr as f64, loss);
        }
    }
    Ok(AeOutcome { log, stats })
}

/// Forward/backward over one chunk; returns the summed (not averaged) loss
/// and gradients over the chunk's sequences.
fn ae_chunk_grads(
    model: &Autoencoder<f32>,
    prepared: &[PreparedSample],
    chunk: &[usize],
) -> Result<(f32, Gradients<f32>)> {
    let inputs: Vec<&ActionSequence> = chunk.iter().map(|&i| &prepared[i].input).collect();
    let targets: Vec<&ActionSequence> = chunk.iter().map(|&i| &prepared[i].target).collect();
    let x = crate::data::sequence::batch_to_array3::<f32>(&inputs)?;
    let t = crate::data::sequence::batch_to_array3::<f32>(&targets)?;
    let dense: Option<Vec<Vec<bool>>> = prepared[chunk[0]].dense_mask.as_ref().map(|_| {
        chunk
            .iter()
            .map(|&i| prepared[i].dense_mask.clone().expect("uniform mask mode"))
            .collect()
    });

    let (z, enc_cache) = model.encode(&x)?;
    let (xhat, dec_cache) = model.decode(&z)?;
    // batch_sq_loss_grad averages over the chunk; rescale to sums so chunk
    // sizes cancel out in the caller's reduction
    let (mean_loss, mut dxhat) = batch_sq_loss_grad(&xhat, &t, dense.as_deref())?;
    let b = chunk.len() as f32;
    for v in dxhat.data_mut() {
        *v *= b;
    }
    let mut grads = Gradients::zeros_like(model.params());
    let dz = model.decode_backward(&dec_cache, &dxhat, &mut grads)?;
    model.encode_backward(&enc_cache, &dz, &mut grads)?;
    Ok((mean_loss * b, grads))
}

/// Train the frame-wise autoencoder on individual frames (each frame of
/// every training sequence is one sample).
pub fn train_framewise(
    model: &mut crate::models::FramewiseAutoencoder<f32>,
    data: &[ActionSequence],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let dim = 3 * data[0].joints();
    let mut frames: Vec<Vec<f32>> = Vec::new();
    for seq in data {
        for n in 0..seq.frames() {
            let mut row = Vec::with_capacity(dim);
            for j in 0..seq.joints() {
                let p = seq.joint(j, n);
                row.extend(p.iter().map(|v| *v as f32));
            }
            frames.push(row);
        }
    }

    let mut adam = AdamState::new(model.params(), cfg.learning_rate as f32);
    let plan = BatchPlan { n: frames.len(), batch: cfg.batch_size, seed: cfg.seed };
    let mut log = TrainLog::default();
    let mut current_epoch = u64::MAX;
    let mut perm = Vec::new();

    for it in 0..cfg.iterations {
        let epoch = plan.epoch_of(it);
        if epoch != current_epoch {
            current_epoch = epoch;
            perm = plan.perm(epoch);
        }
        let batch = plan.batch_at(it, &perm);
        adam.lr = cfg.lr_at(it) as f32;

        let rows: Vec<f32> = batch.iter().flat_map(|&i| frames[i].iter().copied()).collect();
        let x = crate::nn::array::Mat::from_vec(batch.len(), dim, rows)?;
        let (z, enc_cache) = model.encode_frames(&x)?;
        let (xhat, dec_cache) = model.decode_frames(&z)?;

        // mean over the batch of per-frame squared errors
        let inv_b = 1.0f32 / batch.len() as f32;
        let mut loss = 0.0f32;
        let mut dxhat = crate::nn::array::Mat::zeros(batch.len(), dim);
        for (i, (a, b)) in xhat.data().iter().zip(x.data()).enumerate() {
            let d = a - b;
            loss += d * d;
            dxhat.data_mut()[i] = 2.0 * d * inv_b;
        }
        let loss = (loss * inv_b) as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("frame-wise loss diverged at iteration {it}")));
        }
        let mut grads = Gradients::zeros_like(model.params());
        let dz = model.decode_backward(&dec_cache, &dxhat, &mut grads)?;
        model.encode_backward(&enc_cache, &dz, &mut grads)?;
        adam.step(model.params_mut(), &grads)?;

        if it % cfg.log_every == 0 || it + 1 == cfg.iterations {
            log.push(it, adam.lr as f64, loss);
        }
    }
    Ok(log)
}

/// Train the TCN classifier with cross-entropy on labeled complete
/// sequences. Batch-norm statistics are computed over the whole batch, so
/// iterations run unchunked.
pub fn train_classifier(
    model: &mut TcnClassifier<f32>,
    data: &[ActionSequence],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let labels: Vec<usize> = data
        .iter()
        .enumerate()
        .map(|(i, s)| s.label.ok_or_else(|| Error::Data(format!("sequence {i} has no label"))))
        .collect::<Result<Vec<_>>>()?;

    let mut adam = AdamState::new(model.params(), cfg.learning_rate as f32);
    let plan = BatchPlan { n: data.len(), batch: cfg.batch_size, seed: cfg.seed };
    let mut log = TrainLog::default();
    let mut current_epoch = u64::MAX;
    let mut perm = Vec::new();

    for it in 0..cfg.iterations {
        let epoch = plan.epoch_of(it);
        if epoch != current_epoch {
            current_epoch = epoch;
            perm = plan.perm(epoch);
        }
        let batch = plan.batch_at(it, &perm);
        adam.lr = cfg.lr_at(it) as f32;

        let seqs: Vec<&ActionSequence> = batch.iter().map(|&i| &data[i]).collect();
        let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        let x = crate::data::sequence::batch_to_array3::<f32>(&seqs)?;
        let (logits, cache) = model.forward_train(&x)?;
        let (loss, probs) = ops::softmax_cross_entropy(&logits, &batch_labels)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("classifier loss diverged at iteration {it}")));
        }
        let dlogits = ops::softmax_cross_entropy_backward(&probs, &batch_labels);
        let mut grads = Gradients::zeros_like(model.params());
        model.backward(&cache, &dlogits, &mut grads)?;
        adam.step(model.params_mut(), &grads)?;

        if it % cfg.log_every == 0 || it + 1 == cfg.iterations {
            log.push(it, adam.lr as f64, loss as f64);
        }
    }
    Ok(log)
}
