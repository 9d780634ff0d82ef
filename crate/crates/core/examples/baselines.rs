//! The non-prior completion baselines on one masked sequence: nearest-joint
//! copy, a frame-wise pose autoencoder, and dictionary learning with masked
//! orthogonal matching pursuit.
//!
//! ```bash
//! cargo run --release --example baselines
//! ```

use mocomplete::data::{
    apply_mask, fill_missing, gen_random_mask, hip_center, mean_trajectories, resample, synth,
    ActionSequence, FillStrategy,
};
use mocomplete::eval::{coordinate_mask, rmse};
use mocomplete::invert::{array_to_frames, frames_to_array, nearest_joint_baseline};
use mocomplete::models::{FramewiseAutoencoder, FramewiseSpec};
use mocomplete::sparse::{
    devectorize_sequence, learn_dictionary, omp_encode, sc_reconstruct, vectorize_sequence,
    CodingStep, DictLearnConfig, OmpConfig,
};
use mocomplete::train::{train_framewise, LossMode, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synth::generate(&synth::SynthConfig::default());
    let topo = synth::topology();
    let normalize =
        |s: &ActionSequence| hip_center(&resample(s, 64).unwrap(), &topo).unwrap();
    let train: Vec<_> = data.train.iter().map(normalize).collect();
    let x = normalize(&data.test[0]);

    let mask = gen_random_mask(x.joints(), topo.hip_index, 50.0, 9)?;
    let y = apply_mask(&x, &mask)?;
    let stats = mean_trajectories(&train, None)?;

    // 1. nearest observed joint, per frame (no training at all)
    let nn = nearest_joint_baseline(&y, &mask)?;
    println!("nearest-joint: RMSE {:.2} cm", rmse(&x, &nn)?);

    // 2. frame-wise pose prior: no temporal context
    let fw_spec = FramewiseSpec { input_dim: 3 * synth::JOINTS, hidden: vec![64, 32, 16], latent: 8 };
    let mut fw = FramewiseAutoencoder::<f32>::build(&fw_spec, 3)?;
    let cfg = TrainConfig {
        loss: LossMode::Full,
        iterations: 2000,
        batch_size: 64,
        learning_rate: 1e-3,
        milestones: vec![],
        seed: 3,
        fill: FillStrategy::MeanTrajectory,
        redraw_masks_per_epoch: false,
        log_every: 1000,
    };
    train_framewise(&mut fw, &train, &cfg)?;
    let filled = fill_missing(&y, &mask, FillStrategy::MeanTrajectory, Some(&stats))?;
    let frames = array_to_frames(&filled.to_array3::<f32>());
    let recon = fw.reconstruct_frames(&frames)?;
    let fw_seq = ActionSequence::from_array3(&frames_to_array(&recon), 0, x.joints())?;
    println!("frame-wise AE: RMSE {:.2} cm", rmse(&x, &fw_seq)?);

    // 3. dictionary + masked OMP on the vectorized sequence
    let rows: Vec<Vec<f64>> = train.iter().map(vectorize_sequence).collect();
    let dict_cfg = DictLearnConfig {
        atoms: 200,
        alpha: 0.2,
        batch_size: 10,
        iterations: 300,
        seed: 5,
        coder: CodingStep::Lasso,
    };
    let dict = learn_dictionary(&rows, &dict_cfg)?.dictionary;
    let observed = coordinate_mask(&mask, x.frames());
    let code = omp_encode(
        &vectorize_sequence(&y),
        &dict,
        Some(&observed),
        &OmpConfig { sparsity: 20, residual_tol: 1e-4 },
    )?;
    let sc = devectorize_sequence(sc_reconstruct(&code, &dict), x.joints(), x.frames())?;
    println!(
        "sparse coding: RMSE {:.2} cm ({} atoms used, residual {:.2e})",
        rmse(&x, &sc)?,
        code.sparsity(),
        code.residual_norm
    );
    Ok(())
}
