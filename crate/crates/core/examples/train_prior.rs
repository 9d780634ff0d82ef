//! Train the temporal-convolutional deep prior from incomplete data.
//!
//! Every training sequence keeps only a random 75% subset of its joints; the
//! ambient (masked) loss trains the autoencoder without ever reading the
//! missing ground truth. The checkpoint and the fill statistics it produces
//! are what the inversion step consumes.
//!
//! ```bash
//! cargo run --release --example train_prior -- /tmp/prior75
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use mocomplete::data::{hip_center, mean_trajectories, resample, synth, FillStrategy};
use mocomplete::models::{Autoencoder, AutoencoderSpec};
use mocomplete::train::{train_autoencoder, LossMode, MaskAssignment, Milestone, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "prior75".to_string()).into();

    let data = synth::generate(&synth::SynthConfig::default());
    let topo = synth::topology();
    let train: Vec<_> = data
        .train
        .iter()
        .map(|s| hip_center(&resample(s, 64).unwrap(), &topo).unwrap())
        .collect();

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
        milestones: vec![
            Milestone { iteration: 1100, multiplier: 0.1 },
            Milestone { iteration: 1350, multiplier: 0.01 },
        ],
        seed: 7,
        fill: FillStrategy::MeanTrajectory,
        redraw_masks_per_epoch: false,
        log_every: 100,
    };

    let mut model = Autoencoder::<f32>::build(&spec, cfg.seed)?;
    let masks = MaskAssignment::Redrawn { otp: 75.0, hip: topo.hip_index, per_frame: false };
    let outcome = train_autoencoder(&mut model, &train, masks, &cfg)?;
    for e in &outcome.log.entries {
        println!("iter {:>5}  lr {:.1e}  loss {:.4}", e.iteration, e.lr, e.loss);
    }

    std::fs::create_dir_all(&out)?;
    model.save(&out.join("model.ckpt"), &BTreeMap::new())?;
    let stats = outcome.stats.unwrap_or(mean_trajectories(&train, None)?);
    stats.save(&out.join("stats.csv"))?;
    println!("checkpoint and fill statistics written to {}", out.display());
    Ok(())
}
