//! A miniature train-OTP x test-OTP experiment grid with report files.
//!
//! Trains two quick priors (complete data and 75%-observed ambient), then
//! evaluates feed-forward and latent-optimized completion at two test OTPs,
//! writing `report.csv` / `report.json` like the `mocomplete report` command.
//!
//! ```bash
//! cargo run --release --example experiment_grid -- /tmp/grid_out
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use mocomplete::data::{hip_center, mean_trajectories, resample, synth, FillStrategy};
use mocomplete::eval::{run_grid, GridArtifacts, GridConfig, Method, TestCondition};
use mocomplete::invert::InversionConfig;
use mocomplete::models::{Autoencoder, AutoencoderSpec, ClassifierSpec, TcnClassifier};
use mocomplete::sparse::OmpConfig;
use mocomplete::train::{
    train_autoencoder, train_classifier, LossMode, MaskAssignment, Milestone, TrainConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "grid_out".to_string()).into();
    let data = synth::generate(&synth::SynthConfig { train: 120, test: 48, ..Default::default() });
    let topo = synth::topology();
    let norm = |v: &[mocomplete::data::ActionSequence]| -> Vec<mocomplete::data::ActionSequence> {
        v.iter().map(|s| hip_center(&resample(s, 64).unwrap(), &topo).unwrap()).collect()
    };
    let train = norm(&data.train);
    let test = norm(&data.test);

    let spec = AutoencoderSpec {
        input_channels: 3 * synth::JOINTS,
        depth: 3,
        kernel: 4,
        feature_maps: 64,
        latent: 64,
        frames: 64,
    };
    let tcfg = |iters: u64| TrainConfig {
        loss: LossMode::Full,
        iterations: iters,
        batch_size: 32,
        learning_rate: 1e-3,
        milestones: vec![Milestone { iteration: iters * 3 / 4, multiplier: 0.1 }],
        seed: 5,
        fill: FillStrategy::MeanTrajectory,
        redraw_masks_per_epoch: false,
        log_every: 500,
    };

    println!("training priors (complete + ambient 75)...");
    let mut ae100 = Autoencoder::<f32>::build(&spec, 1)?;
    train_autoencoder(&mut ae100, &train, MaskAssignment::None, &tcfg(1500))?;

    let mut ae75 = Autoencoder::<f32>::build(&spec, 2)?;
    let mut amb = tcfg(1500);
    amb.loss = LossMode::Ambient;
    let out75 = train_autoencoder(
        &mut ae75,
        &train,
        MaskAssignment::Redrawn { otp: 75.0, hip: topo.hip_index, per_frame: false },
        &amb,
    )?;
    let stats75 = out75.stats.unwrap();
    let full_stats = mean_trajectories(&train, None)?;

    println!("training the evaluation classifier...");
    let cls_spec = ClassifierSpec {
        input_channels: 3 * synth::JOINTS,
        frames: 64,
        blocks: vec![32, 48, 64],
        convs_per_block: 1,
        kernel: 8,
        classes: synth::CLASSES,
    };
    let mut cls = TcnClassifier::<f32>::build(&cls_spec, 3)?;
    train_classifier(&mut cls, &train, &tcfg(1500))?;

    let mut autoencoders = BTreeMap::new();
    autoencoders.insert("100".to_string(), (&ae100, None));
    autoencoders.insert("75".to_string(), (&ae75, Some(&stats75)));
    let artifacts = GridArtifacts {
        autoencoders,
        classifier: &cls,
        framewise: None,
        dictionary: None,
        incomplete_classifiers: BTreeMap::new(),
        full_stats: Some(&full_stats),
    };
    let cfg = GridConfig {
        methods: vec![Method::Feedforward, Method::LatentOpt, Method::Nearest],
        train_otps: vec!["100".to_string(), "75".to_string()],
        test_conditions: vec![
            TestCondition::Otp { otp: 75.0 },
            TestCondition::Otp { otp: 50.0 },
        ],
        seed: 17,
        inversion: InversionConfig { iterations: 300, ..Default::default() },
        fill: FillStrategy::MeanTrajectory,
        omp: OmpConfig::default(),
    };

    println!("running the grid...");
    let report = run_grid(&test, &topo, &artifacts, &cfg, None)?;
    print!("{}", report.to_csv());
    std::fs::create_dir_all(&out)?;
    report.write(&out)?;
    println!("report files written to {}", out.display());
    Ok(())
}
