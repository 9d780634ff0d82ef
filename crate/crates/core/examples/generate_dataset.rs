//! Generate the synthetic action dataset and normalize it.
//!
//! Writes a raw dataset directory (varying sequence lengths, drifting hip),
//! then mirrors what `mocomplete prepare` does: piecewise-linear resampling
//! to a fixed frame count and hip-centering, plus train-set mean
//! trajectories.
//!
//! ```bash
//! cargo run --release --example generate_dataset -- /tmp/synth
//! ```

use std::path::PathBuf;

use mocomplete::data::{hip_center, mean_trajectories, resample, synth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "synth_data".to_string()).into();

    let cfg = synth::SynthConfig { train: 60, test: 24, seed: 7, ..Default::default() };
    let data = synth::generate(&cfg);
    synth::write_raw_dataset(&out.join("raw"), &data, 64)?;
    println!(
        "raw: {} train / {} test sequences, lengths {}..{} frames",
        data.train.len(),
        data.test.len(),
        cfg.frames_min,
        cfg.frames_max
    );

    // normalize: resample to N = 64, fix the hip at the origin
    let topo = synth::topology();
    let normalize = |seqs: &[mocomplete::data::ActionSequence]| {
        seqs.iter()
            .map(|s| hip_center(&resample(s, 64)?, &topo))
            .collect::<mocomplete::Result<Vec<_>>>()
    };
    let train = normalize(&data.train)?;
    let test = normalize(&data.test)?;

    for (i, seq) in train.iter().take(3).enumerate() {
        let hip = seq.joint(topo.hip_index, 0);
        println!(
            "train[{i}]: class {} ({}), N = {}, hip at ({:.1e}, {:.1e}, {:.1e})",
            seq.label.unwrap(),
            synth::class_name(seq.label.unwrap()),
            seq.frames(),
            hip[0],
            hip[1],
            hip[2]
        );
    }

    let stats = mean_trajectories(&train, None)?;
    stats.save(&out.join("mean_traj.csv"))?;
    println!("mean trajectories: {} x {} written", 3 * stats.joints, stats.frames);

    let seq_path = out.join("normalized_example.csv");
    train[0].write_csv(&seq_path)?;
    println!("one normalized sequence written to {}", seq_path.display());
    let _ = test;
    Ok(())
}
