//! Recover completely unobserved joints from a masked action sequence.
//!
//! The full story in one file: train a prior on incomplete data, drop half
//! the joints of an unseen test sequence, and compare the feed-forward
//! completion `D(E(Y))` against latent-space optimization
//! `z* = argmin_z ||Y - A D(z)||^2`, `X_hat = D(z*)`.
//!
//! ```bash
//! cargo run --release --example recover_joints
//! ```

use mocomplete::data::{
    apply_mask, fill_missing, gen_random_mask, hip_center, resample, synth, FillStrategy,
};
use mocomplete::eval::rmse;
use mocomplete::invert::{feedforward_reconstruct, latent_optimize, InversionConfig};
use mocomplete::models::{Autoencoder, AutoencoderSpec};
use mocomplete::train::{train_autoencoder, LossMode, MaskAssignment, Milestone, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synth::generate(&synth::SynthConfig::default());
    let topo = synth::topology();
    let normalize = |s: &mocomplete::data::ActionSequence| {
        hip_center(&resample(s, 64).unwrap(), &topo).unwrap()
    };
    let train: Vec<_> = data.train.iter().map(normalize).collect();

    let spec = AutoencoderSpec {
        input_channels: 3 * synth::JOINTS,
        depth: 3,
        kernel: 4,
        feature_maps: 48,
        latent: 32,
        frames: 64,
    };
    let cfg = TrainConfig {
        loss: LossMode::Ambient,
        iterations: 1500,
        batch_size: 32,
        learning_rate: 1e-3,
        milestones: vec![Milestone { iteration: 1200, multiplier: 0.1 }],
        seed: 11,
        fill: FillStrategy::MeanTrajectory,
        redraw_masks_per_epoch: false,
        log_every: 500,
    };
    let mut model = Autoencoder::<f32>::build(&spec, cfg.seed)?;
    println!("training the prior on 75%-observed sequences...");
    let outcome = train_autoencoder(
        &mut model,
        &train,
        MaskAssignment::Redrawn { otp: 75.0, hip: topo.hip_index, per_frame: false },
        &cfg,
    )?;
    let stats = outcome.stats.expect("ambient training produces fill stats");

    // an unseen test sequence with only 50% of joints observed
    let x = normalize(&data.test[5]);
    println!(
        "test sequence: class {} ({})",
        x.label.unwrap(),
        synth::class_name(x.label.unwrap())
    );
    let mask = gen_random_mask(x.joints(), topo.hip_index, 50.0, 123)?;
    let dropped: Vec<usize> = (0..x.joints()).filter(|&j| !mask.is_observed(j, 0)).collect();
    println!("unobserved joints: {dropped:?}");

    let y = apply_mask(&x, &mask)?;
    let filled = fill_missing(&y, &mask, FillStrategy::MeanTrajectory, Some(&stats))?;

    let (ff, z0) = feedforward_reconstruct(&filled.to_array3::<f32>(), &model)?;
    let ff_seq = mocomplete::data::ActionSequence::from_array3(&ff, 0, x.joints())?;
    println!("feed-forward D(E(Y)):   RMSE {:.2} cm", rmse(&x, &ff_seq)?);

    let res = latent_optimize(&y.to_array3::<f32>(), &mask, &model, &z0, &InversionConfig::default())?;
    let opt_seq = mocomplete::data::ActionSequence::from_array3(&res.x_hat, 0, x.joints())?;
    println!(
        "latent-optimized D(z*): RMSE {:.2} cm  (objective {:.4} -> {:.4} over {} iterates)",
        rmse(&x, &opt_seq)?,
        res.initial_objective,
        res.objective,
        res.trace.len()
    );
    Ok(())
}
